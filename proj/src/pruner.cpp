#include "cbp/pruner.hpp"

#include <algorithm>

#include "cbp/error.hpp"

namespace cbp {

std::size_t PruningPlan::total_removed() const {
  std::size_t n = 0;
  for (const auto& [_, r] : remove) n += r.size();
  return n;
}

std::size_t PruningPlan::removed_from(const std::string& layer) const {
  const auto it = remove.find(layer);
  return it == remove.end() ? 0 : it->second.size();
}

namespace {

const LayerSpec& prunable_layer(std::span<const LayerSpec> layers, const std::string& name, std::size_t& index) {
  const auto idx = find_layer(layers, name);
  if (!idx) throw Error(ErrorKind::Validation, "plan names unknown layer '" + name + "'");
  const LayerSpec& spec = layers[*idx];
  if (spec.kind != LayerKind::Dense) {
    throw Error(ErrorKind::Validation, "layer '" + name + "' is not a prunable dense layer");
  }
  index = *idx;
  return spec;
}

void check_removal(const LayerSpec& spec, const std::vector<std::size_t>& removed) {
  if (!std::is_sorted(removed.begin(), removed.end()) ||
      std::adjacent_find(removed.begin(), removed.end()) != removed.end()) {
    throw Error(ErrorKind::Validation, "plan for layer '" + spec.name + "' is not sorted and unique");
  }
  if (!removed.empty() && removed.back() >= spec.output_dim) {
    throw Error(ErrorKind::DimensionMismatch, "plan removes neuron " + std::to_string(removed.back()) +
                                                  " from layer '" + spec.name + "' with " +
                                                  std::to_string(spec.output_dim) + " neurons");
  }
  if (removed.size() == spec.output_dim) {
    throw Error(ErrorKind::WouldEmptyLayer, "plan would remove every neuron of layer '" + spec.name + "'");
  }
}

std::vector<std::size_t> survivors(std::size_t width, const std::vector<std::size_t>& removed) {
  std::vector<std::size_t> keep;
  keep.reserve(width - removed.size());
  auto it = removed.begin();
  for (std::size_t i = 0; i < width; ++i) {
    if (it != removed.end() && *it == i) {
      ++it;
    } else {
      keep.push_back(i);
    }
  }
  return keep;
}

}  // namespace

PruningPlan plan_from_keepset(const KeepSet& keep, const Network& net, const std::vector<std::string>& layers,
                              int iteration, std::string policy) {
  PruningPlan plan;
  plan.iteration = iteration;
  plan.policy = std::move(policy);
  for (const auto& name : layers) {
    std::size_t idx = 0;
    const LayerSpec& spec = prunable_layer(net.layers(), name, idx);
    const auto& kept = keep.neurons(name);
    if (!kept.empty() && *kept.rbegin() >= spec.output_dim) {
      throw Error(ErrorKind::Validation, "keep set names neuron " + std::to_string(*kept.rbegin()) +
                                             " beyond layer '" + name + "'");
    }
    if (kept.empty()) {
      throw Error(ErrorKind::WouldEmptyLayer,
                  "no neuron of layer '" + name + "' appears in a retained rule; pruning would empty it");
    }
    auto& removed = plan.remove[name];
    for (std::size_t i = 0; i < spec.output_dim; ++i) {
      if (!kept.contains(i)) removed.push_back(i);
    }
  }
  return plan;
}

Architecture apply(const Architecture& layers, const PruningPlan& plan) {
  Architecture out = layers;
  for (const auto& [name, removed] : plan.remove) {
    std::size_t idx = 0;
    check_removal(prunable_layer(layers, name, idx), removed);
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto it = plan.remove.find(out[i].name);
    if (it == plan.remove.end() || it->second.empty()) continue;
    out[i].output_dim -= it->second.size();
    out[i + 1].input_dim -= it->second.size();
  }
  validate_architecture(out);
  return out;
}

Network apply(const Network& net, const PruningPlan& plan) {
  const Architecture shape = apply(net.layers(), plan);
  std::vector<DenseParams> params(net.all_params().begin(), net.all_params().end());

  for (std::size_t i = 0; i < net.layer_count(); ++i) {
    const auto it = plan.remove.find(net.layer(i).name);
    if (it == plan.remove.end() || it->second.empty()) continue;
    const auto keep = survivors(net.layer(i).output_dim, it->second);

    // Rows of this layer; its input width may already reflect an upstream cut.
    DenseParams& own = params[i];
    const std::size_t in = own.bias.empty() ? 0 : own.weight.size() / own.bias.size();
    DenseParams cut;
    cut.weight.reserve(keep.size() * in);
    cut.bias.reserve(keep.size());
    for (std::size_t r : keep) {
      cut.weight.insert(cut.weight.end(), own.weight.begin() + static_cast<std::ptrdiff_t>(r * in),
                        own.weight.begin() + static_cast<std::ptrdiff_t>((r + 1) * in));
      cut.bias.push_back(own.bias[r]);
    }
    own = std::move(cut);

    // Columns of the next layer.
    DenseParams& next = params[i + 1];
    const std::size_t rows = next.bias.size();
    const std::size_t old_cols = net.layer(i).output_dim;
    std::vector<float> w;
    w.reserve(rows * keep.size());
    for (std::size_t r = 0; r < rows; ++r) {
      const float* row = next.weight.data() + r * old_cols;
      for (std::size_t c : keep) w.push_back(row[c]);
    }
    next.weight = std::move(w);
  }
  return Network(shape, std::move(params), net.class_names(), net.activation());
}

nlohmann::json plan_to_json(const PruningPlan& plan) {
  nlohmann::json layers = nlohmann::json::object();
  for (const auto& [name, removed] : plan.remove) layers[name] = removed;
  return {{"iteration", plan.iteration}, {"policy", plan.policy}, {"layers", layers}};
}

PruningPlan plan_from_json(const nlohmann::json& j) {
  PruningPlan plan;
  try {
    plan.iteration = j.at("iteration").get<int>();
    plan.policy = j.value("policy", std::string{});
    for (const auto& [name, removed] : j.at("layers").items()) {
      plan.remove[name] = removed.get<std::vector<std::size_t>>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Validation, std::string("plan: ") + e.what());
  }
  return plan;
}

}  // namespace cbp
