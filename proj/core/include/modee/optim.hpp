#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "modee/params.hpp"

namespace modee {

struct AdamSettings {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
  // true: AdamW (decay applied to the weights directly, outside the moment
  // estimates). false: Adam with an L2 term added to the gradient.
  bool decoupled_decay = false;
};

/// Adam-family optimizer over a fixed list of parameters.
class AdamGroup {
 public:
  AdamGroup(std::string name, AdamSettings settings);

  void add(const NamedParameter& p);
  /// One update from the gradients currently held by the parameters.
  /// Parameters without a gradient are left untouched but still count the
  /// step for bias correction.
  void step();
  void zero_grad();

  const std::string& name() const { return name_; }
  const AdamSettings& settings() const { return settings_; }
  const std::vector<NamedParameter>& parameters() const { return params_; }
  std::uint64_t steps() const { return steps_; }

  /// First and second moments by parameter name, plus the step count.
  std::vector<NamedMatrix> export_state() const;
  void import_state(const std::vector<NamedMatrix>& items);

 private:
  std::string name_;
  AdamSettings settings_;
  std::vector<NamedParameter> params_;
  std::vector<ad::Matrix> m_, v_;
  std::uint64_t steps_ = 0;
};

struct OptimizerSettings {
  double lr_text = 1e-3;
  double weight_decay_text = 0.01;
  double lr_graph_fusion = 1e-3;
  double weight_decay_graph_fusion = 5e-4;
};

enum class OptimizerGroupId { TextDecoder = 0, GraphFusion = 1 };

/// Which group each module's parameters go to. A tag missing from the map is
/// an unassigned parameter.
using GroupAssignment = std::map<ModuleTag, OptimizerGroupId>;
GroupAssignment default_group_assignment();

/// Group A (text encoder + decoder): AdamW at lr_text.
/// Group B (graph encoder + fusion): Adam at lr_graph_fusion with L2 decay.
class OptimizerGroups {
 public:
  OptimizerGroups(AdamGroup text_decoder, AdamGroup graph_fusion);

  AdamGroup& group(OptimizerGroupId id) { return groups_[static_cast<std::size_t>(id)]; }
  const AdamGroup& group(OptimizerGroupId id) const { return groups_[static_cast<std::size_t>(id)]; }

  void step();
  void zero_grad();

  void save(const std::filesystem::path& path) const;
  void load(const std::filesystem::path& path);

 private:
  std::array<AdamGroup, 2> groups_;
};

/// Throws ConfigError when a parameter's module has no group or when the
/// same parameter is registered twice.
OptimizerGroups make_optimizer_groups(const OptimizerSettings& settings, const ParameterSet& params,
                                      const GroupAssignment& assignment = default_group_assignment());

}  // namespace modee
