#include "modee/optim.hpp"

#include <cmath>
#include <set>

#include "modee/errors.hpp"

namespace modee {

AdamGroup::AdamGroup(std::string name, AdamSettings settings)
    : name_(std::move(name)), settings_(settings) {
  if (!(settings_.lr > 0.0)) throw ConfigError("optimizer group '" + name_ + "': lr must be > 0");
  if (settings_.weight_decay < 0.0) {
    throw ConfigError("optimizer group '" + name_ + "': weight decay must be >= 0");
  }
}

void AdamGroup::add(const NamedParameter& p) {
  params_.push_back(p);
  m_.push_back(ad::Matrix::Zero(p.var.rows(), p.var.cols()));
  v_.push_back(ad::Matrix::Zero(p.var.rows(), p.var.cols()));
}

void AdamGroup::step() {
  ++steps_;
  const auto& s = settings_;
  const double t = static_cast<double>(steps_);
  const double c1 = 1.0 - std::pow(s.beta1, t);
  const double c2 = 1.0 - std::pow(s.beta2, t);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    ad::Var& var = params_[i].var;
    if (var.grad().size() == 0) continue;
    ad::Matrix& w = var.mutable_value();
    ad::Matrix g = var.grad();
    if (s.decoupled_decay) {
      w *= 1.0 - s.lr * s.weight_decay;
    } else if (s.weight_decay != 0.0) {
      g += s.weight_decay * w;
    }
    m_[i] = s.beta1 * m_[i] + (1.0 - s.beta1) * g;
    v_[i] = s.beta2 * v_[i] + (1.0 - s.beta2) * g.cwiseProduct(g);
    w.array() -= s.lr * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + s.eps);
  }
}

void AdamGroup::zero_grad() {
  for (auto& p : params_) p.var.zero_grad();
}

std::vector<NamedMatrix> AdamGroup::export_state() const {
  std::vector<NamedMatrix> out;
  out.push_back({name_ + "/steps", ad::Matrix::Constant(1, 1, static_cast<double>(steps_))});
  for (std::size_t i = 0; i < params_.size(); ++i) {
    out.push_back({name_ + "/m/" + params_[i].name, m_[i]});
    out.push_back({name_ + "/v/" + params_[i].name, v_[i]});
  }
  return out;
}

void AdamGroup::import_state(const std::vector<NamedMatrix>& items) {
  std::map<std::string, const ad::Matrix*> by_name;
  for (const auto& it : items) by_name[it.name] = &it.value;
  auto fetch = [&](const std::string& key, ad::Index rows, ad::Index cols) -> const ad::Matrix& {
    auto found = by_name.find(key);
    if (found == by_name.end()) throw IoError("optimizer state is missing '" + key + "'");
    if (found->second->rows() != rows || found->second->cols() != cols) {
      throw IoError("optimizer state '" + key + "' has the wrong shape");
    }
    return *found->second;
  };
  steps_ = static_cast<std::uint64_t>(fetch(name_ + "/steps", 1, 1)(0, 0));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    m_[i] = fetch(name_ + "/m/" + params_[i].name, m_[i].rows(), m_[i].cols());
    v_[i] = fetch(name_ + "/v/" + params_[i].name, v_[i].rows(), v_[i].cols());
  }
}

GroupAssignment default_group_assignment() {
  return {{ModuleTag::TextEncoder, OptimizerGroupId::TextDecoder},
          {ModuleTag::Decoder, OptimizerGroupId::TextDecoder},
          {ModuleTag::GraphEncoder, OptimizerGroupId::GraphFusion},
          {ModuleTag::Fusion, OptimizerGroupId::GraphFusion}};
}

OptimizerGroups::OptimizerGroups(AdamGroup text_decoder, AdamGroup graph_fusion)
    : groups_{std::move(text_decoder), std::move(graph_fusion)} {}

void OptimizerGroups::step() {
  for (auto& g : groups_) g.step();
}

void OptimizerGroups::zero_grad() {
  for (auto& g : groups_) g.zero_grad();
}

void OptimizerGroups::save(const std::filesystem::path& path) const {
  std::vector<NamedMatrix> all;
  for (const auto& g : groups_) {
    auto part = g.export_state();
    all.insert(all.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
  }
  write_matrices(path, all);
}

void OptimizerGroups::load(const std::filesystem::path& path) {
  const auto items = read_matrices(path);
  for (auto& g : groups_) g.import_state(items);
}

OptimizerGroups make_optimizer_groups(const OptimizerSettings& settings, const ParameterSet& params,
                                      const GroupAssignment& assignment) {
  AdamGroup text("text_decoder", AdamSettings{.lr = settings.lr_text,
                                              .weight_decay = settings.weight_decay_text,
                                              .decoupled_decay = true});
  AdamGroup graph("graph_fusion", AdamSettings{.lr = settings.lr_graph_fusion,
                                               .weight_decay = settings.weight_decay_graph_fusion,
                                               .decoupled_decay = false});
  std::set<const ad::Node*> seen;
  for (const auto& p : params.entries()) {
    if (!seen.insert(p.var.node()).second) {
      throw ConfigError("parameter '" + p.name + "' is registered more than once");
    }
    auto it = assignment.find(p.tag);
    if (it == assignment.end()) {
      throw ConfigError("parameter '" + p.name + "' (module " + std::string(module_tag_name(p.tag)) +
                        ") is not assigned to an optimizer group");
    }
    (it->second == OptimizerGroupId::TextDecoder ? text : graph).add(p);
  }
  return OptimizerGroups(std::move(text), std::move(graph));
}

}  // namespace modee
