#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "cbp/identifier.hpp"
#include "cbp/model.hpp"

namespace cbp {

/// Neurons to remove per pruned layer (sorted, unique).
struct PruningPlan {
  int iteration = 0;
  std::string policy;
  std::map<std::string, std::vector<std::size_t>> remove;

  std::size_t total_removed() const;
  std::size_t removed_from(const std::string& layer) const;
  bool empty() const { return total_removed() == 0; }
  bool operator==(const PruningPlan&) const = default;
};

/// Remove-set = complement of the keep set for every layer in `layers`.
/// Throws Error(WouldEmptyLayer) if some layer would lose every neuron.
PruningPlan plan_from_keepset(const KeepSet& keep, const Network& net, const std::vector<std::string>& layers,
                              int iteration = 0, std::string policy = {});

/// Shape-only effect of a plan: each pruned layer loses rows, the next layer loses inputs.
Architecture apply(const Architecture& layers, const PruningPlan& plan);

/// Structured removal: rows and bias entries of each pruned layer, matching
/// columns of the following layer. Layers are processed first-to-last and
/// every surviving weight is copied bit-for-bit into a fresh network.
Network apply(const Network& net, const PruningPlan& plan);

/// Audit dump {iteration, policy, layers: {name: [removed indices]}}.
nlohmann::json plan_to_json(const PruningPlan& plan);
PruningPlan plan_from_json(const nlohmann::json& j);

}  // namespace cbp
