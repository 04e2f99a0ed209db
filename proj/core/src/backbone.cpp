#include "modee/backbone.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

#include "modee/errors.hpp"

namespace modee {

namespace {

struct Hypothesis {
  std::vector<int> ids;  // starts with the start token
  double score = 0.0;
};

}  // namespace

std::vector<int> beam_search(StepDecoder& decoder, const GenerationConfig& cfg) {
  if (cfg.beam_size < 1) throw ValueError("beam_size must be >= 1");
  const auto beam = static_cast<std::size_t>(cfg.beam_size);

  std::vector<Hypothesis> alive{{{cfg.start_token}, 0.0}};
  std::vector<Hypothesis> finished;

  for (std::size_t step = 0; step < cfg.max_output_tokens && !alive.empty(); ++step) {
    struct Candidate {
      std::size_t parent;
      int token;
      double score;
    };
    std::vector<Candidate> cands;
    for (std::size_t h = 0; h < alive.size(); ++h) {
      const Eigen::VectorXd lp = decoder.next_log_probs(alive[h].ids);
      std::vector<int> order(static_cast<std::size_t>(lp.size()));
      std::iota(order.begin(), order.end(), 0);
      const std::size_t k = std::min(beam, order.size());
      std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                        [&](int a, int b) { return lp(a) > lp(b) || (lp(a) == lp(b) && a < b); });
      for (std::size_t j = 0; j < k; ++j) {
        cands.push_back({h, order[j], alive[h].score + lp(order[j])});
      }
    }
    std::stable_sort(cands.begin(), cands.end(),
                     [](const Candidate& a, const Candidate& b) { return a.score > b.score; });
    if (cands.size() > beam) cands.resize(beam);

    std::vector<Hypothesis> next;
    for (const auto& c : cands) {
      Hypothesis hyp{alive[c.parent].ids, c.score};
      if (c.token == cfg.end_token) {
        finished.push_back(std::move(hyp));
      } else {
        hyp.ids.push_back(c.token);
        next.push_back(std::move(hyp));
      }
    }
    alive = std::move(next);
    if (finished.size() >= beam) break;
    // Extending a hypothesis can only lower its score.
    if (!finished.empty() && !alive.empty()) {
      const double best_done =
          std::max_element(finished.begin(), finished.end(), [](auto& a, auto& b) {
            return a.score < b.score;
          })->score;
      const double best_alive =
          std::max_element(alive.begin(), alive.end(), [](auto& a, auto& b) {
            return a.score < b.score;
          })->score;
      if (best_done >= best_alive) break;
    }
  }

  // Hypotheses cut off by the length cap compete with finished ones.
  std::vector<Hypothesis>& pool = finished;
  for (auto& h : alive) pool.push_back(std::move(h));
  if (pool.empty()) return {};
  const Hypothesis* winner = &pool.front();
  for (const auto& h : pool) {
    if (h.score > winner->score) winner = &h;
  }
  return {winner->ids.begin() + 1, winner->ids.end()};
}

std::vector<int> Backbone::generate_ids(const ad::Matrix& cond, const GenerationConfig& cfg) const {
  ad::NoGradGuard no_grad;
  auto dec = step_decoder(cond);
  return beam_search(*dec, cfg);
}

std::string Backbone::generate(const ad::Matrix& cond, const GenerationConfig& cfg) const {
  return decode(vocabulary(), generate_ids(cond, cfg));
}

}  // namespace modee
