#include "modee/synthetic.hpp"

#include <string>

#include "modee/rng.hpp"

namespace modee {

namespace {

using Pool = std::vector<std::string>;

const Pool kWhere = {"Mumbai",   "New Delhi", "Kolkata",   "Chennai", "Guwahati",
                     "Srinagar", "Lucknow",   "Patna",     "Jaipur",  "Navi Mumbai",
                     "Bhopal",   "Cuttack",   "Hyderabad", "Pune",    "Shillong"};
const Pool kWhen = {"Monday", "Tuesday", "Wednesday", "Thursday", "Friday",
                    "Saturday", "Sunday", "yesterday", "today"};
const Pool kWhat = {
    "heavy flooding submerged several low lying roads",
    "a fire broke out in a crowded market",
    "farmers staged a large protest outside the assembly",
    "a passenger train derailed near the main station",
    "the state government announced a new relief package",
    "a building collapsed after days of heavy rain",
    "students boycotted classes across several colleges",
    "police arrested four suspects in a fraud case",
    "a landslide blocked the national highway for hours",
    "traders observed a complete shutdown of shops",
    "a bus overturned on a busy bridge",
    "health officials launched a door to door vaccination drive",
};
const Pool kWho = {"local residents",   "police officials", "the district administration",
                   "angry farmers",     "rescue teams",     "the fire department",
                   "railway officials", "student unions",   "the chief minister",
                   "trader associations"};
const Pool kWhy = {
    "continuous rainfall over the past three days",
    "a short circuit in an electrical panel",
    "the sudden hike in fuel prices across the state",
    "poor maintenance of the old railway tracks",
    "the delay in payment of crop compensation",
    "an illegal construction that weakened the foundation",
    "a dispute over the new admission rules",
    "a complaint filed by several cheated investors",
};
const Pool kTitles = {"City news bulletin", "Regional report", "Latest from the state",
                      "Morning news roundup", "District update"};
const Pool kFiller = {
    "Officials said the situation was being monitored closely.",
    "More details are expected later in the week.",
    "The matter has drawn attention from several quarters.",
    "Local television channels carried live coverage.",
    "A senior officer said that an inquiry would be conducted.",
    "Traffic in the surrounding areas remained slow.",
    "Opposition leaders demanded a detailed report.",
    "Residents were advised to stay alert.",
    "Further updates will be shared by the authorities.",
    "The weather department has issued a fresh advisory.",
};

class TextBuilder {
 public:
  void lit(const std::string& s) { text_ += s; }
  void slot(TokenClass cls, const std::string& value) {
    const std::size_t start = text_.size();
    text_ += value;
    spans_.push_back({cls, start, text_.size()});
  }
  std::string& text() { return text_; }
  std::vector<Span>& spans() { return spans_; }

 private:
  std::string text_;
  std::vector<Span> spans_;
};

const std::string& draw(Rng& rng, const Pool& pool, std::size_t limit) {
  const std::size_t n = (limit > 0 && limit < pool.size()) ? limit : pool.size();
  return pool[static_cast<std::size_t>(rng.index(n))];
}

}  // namespace

std::vector<AnnotatedDocument> generate_synthetic_corpus(const SyntheticOptions& options) {
  std::vector<AnnotatedDocument> docs;
  docs.reserve(options.count);
  Rng rng(options.seed);
  const std::size_t lim = options.pool_limit;

  for (std::size_t k = 0; k < options.count; ++k) {
    AnnotatedDocument out;
    EventRecord& gold = out.gold;
    const Pool* pools[kSlotCount] = {&kWhere, &kWhen, &kWhat, &kWho, &kWhy};
    for (Slot s : kSlots) {
      const auto i = static_cast<std::size_t>(s);
      if (rng.bernoulli(options.presence[i])) gold.set(s, draw(rng, *pools[i], lim));
    }
    // Every document describes something.
    if (!gold.present(Slot::What)) gold.set(Slot::What, draw(rng, kWhat, lim));

    const std::string title = draw(rng, kTitles, 0);
    const int n_filler = options.min_filler +
                         static_cast<int>(rng.index(static_cast<std::uint64_t>(
                             options.max_filler - options.min_filler + 1)));
    const int event_pos = static_cast<int>(rng.index(static_cast<std::uint64_t>(n_filler + 1)));
    const auto filler_idx = rng.sample(static_cast<int>(kFiller.size()), n_filler);
    const int tmpl = static_cast<int>(rng.index(3));

    TextBuilder tb;
    tb.lit(title + "\n");
    const std::size_t body_start = tb.text().size();
    int filler_used = 0;
    for (int sentence = 0; sentence <= n_filler; ++sentence) {
      if (sentence > 0) tb.lit(" ");
      if (sentence != event_pos) {
        tb.lit(kFiller[static_cast<std::size_t>(filler_idx[static_cast<std::size_t>(filler_used++)])]);
        continue;
      }
      auto v = [&](Slot s) -> const std::string& { return *gold[s]; };
      auto has = [&](Slot s) { return gold.present(s); };
      switch (tmpl) {
        case 0:
          tb.lit("According to reports, ");
          if (has(Slot::Who)) {
            tb.slot(TokenClass::Who, v(Slot::Who));
            tb.lit(" said that ");
          }
          tb.slot(TokenClass::What, v(Slot::What));
          if (has(Slot::Where)) {
            tb.lit(" in ");
            tb.slot(TokenClass::Where, v(Slot::Where));
          }
          if (has(Slot::When)) {
            tb.lit(" on ");
            tb.slot(TokenClass::When, v(Slot::When));
          }
          if (has(Slot::Why)) {
            tb.lit(" because of ");
            tb.slot(TokenClass::Why, v(Slot::Why));
          }
          break;
        case 1:
          if (has(Slot::When)) {
            tb.lit("On ");
            tb.slot(TokenClass::When, v(Slot::When));
            tb.lit(", ");
          }
          tb.slot(TokenClass::What, v(Slot::What));
          if (has(Slot::Where)) {
            tb.lit(" in ");
            tb.slot(TokenClass::Where, v(Slot::Where));
          }
          if (has(Slot::Who)) {
            tb.lit(", said ");
            tb.slot(TokenClass::Who, v(Slot::Who));
          }
          if (has(Slot::Why)) {
            tb.lit(", due to ");
            tb.slot(TokenClass::Why, v(Slot::Why));
          }
          break;
        default:
          if (has(Slot::Where)) {
            tb.lit("In ");
            tb.slot(TokenClass::Where, v(Slot::Where));
            tb.lit(", ");
          }
          if (has(Slot::Who)) {
            tb.slot(TokenClass::Who, v(Slot::Who));
            tb.lit(" confirmed that ");
          }
          tb.slot(TokenClass::What, v(Slot::What));
          if (has(Slot::When)) {
            tb.lit(" on ");
            tb.slot(TokenClass::When, v(Slot::When));
          }
          if (has(Slot::Why)) {
            tb.lit(" as a result of ");
            tb.slot(TokenClass::Why, v(Slot::Why));
          }
          break;
      }
      tb.lit(".");
    }

    Document& doc = out.document;
    doc.id = options.id_prefix + "-" + std::to_string(k);
    doc.title = title;
    doc.text = tb.text();
    doc.body = doc.text.substr(body_start);
    if (options.with_argument_types) {
      for (Slot s : kSlots) {
        if (gold.present(s)) doc.argument_types.emplace_back(slot_name(s));
      }
    }
    out.spans = std::move(tb.spans());
    docs.push_back(std::move(out));
  }
  return docs;
}

}  // namespace modee
