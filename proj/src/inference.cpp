#include "cbp/inference.hpp"

#include <fstream>

#include "cbp/binary_io.hpp"
#include "cbp/error.hpp"
#include "cbp/kernels.hpp"

namespace cbp {

ForwardPass::ForwardPass(const Network& net) : net_(&net), buffers_(net.layer_count()) {
  for (std::size_t i = net.first_dense_index(); i < net.layer_count(); ++i) {
    buffers_[i].resize(net.layer(i).output_dim);
  }
}

template <bool Parallel>
std::span<const float> ForwardPass::run_impl(std::span<const float> features) {
  if (features.size() != net_->input_dim()) {
    throw Error(ErrorKind::DimensionMismatch, "forward: expected " + std::to_string(net_->input_dim()) +
                                                  " features, got " + std::to_string(features.size()));
  }
  std::span<const float> x = features;
  for (std::size_t i = net_->first_dense_index(); i < net_->layer_count(); ++i) {
    const DenseParams& p = net_->params(i);
    const bool relu = net_->layer(i).kind != LayerKind::Output;
    if constexpr (Parallel) {
      kernels::dense_forward(p.weight, p.bias, x, buffers_[i], relu);
    } else {
      kernels::dense_forward_serial(p.weight, p.bias, x, buffers_[i], relu);
    }
    x = buffers_[i];
  }
  return x;
}

std::span<const float> ForwardPass::run(std::span<const float> features) { return run_impl<true>(features); }

std::span<const float> ForwardPass::run_serial(std::span<const float> features) {
  return run_impl<false>(features);
}

ForwardResult forward(const Network& net, std::span<const float> features) {
  ForwardPass pass(net);
  const auto logits = pass.run_serial(features);
  ForwardResult out;
  out.logits.assign(logits.begin(), logits.end());
  out.activations.resize(net.layer_count());
  for (std::size_t i = net.first_dense_index(); i + 1 < net.layer_count(); ++i) {
    const auto a = pass.activation(i);
    out.activations[i].assign(a.begin(), a.end());
  }
  return out;
}

std::size_t argmax(std::span<const float> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

const LayerActivations& ActivationDataset::layer(std::string_view name) const {
  for (const auto& l : layers) {
    if (l.layer == name) return l;
  }
  throw Error(ErrorKind::Validation, "no activations captured for layer '" + std::string(name) + "'");
}

std::optional<std::size_t> ActivationDataset::concept_index(std::string_view name) const {
  for (std::size_t i = 0; i < concepts.size(); ++i) {
    if (concepts[i].name == name) return i;
  }
  return std::nullopt;
}

std::vector<std::uint8_t> ActivationDataset::concept_labels(std::size_t concept_idx) const {
  std::vector<std::uint8_t> out(samples.size());
  for (std::size_t s = 0; s < samples.size(); ++s) out[s] = samples[s].concept_flags.at(concept_idx);
  return out;
}

std::size_t ActivationDataset::misclassified_count() const {
  std::size_t n = 0;
  for (const auto& s : samples) n += s.correct ? 0 : 1;
  return n;
}

std::vector<std::string> default_analyzed_layers(const Network& net) {
  std::vector<std::string> out;
  for (const auto& l : net.layers()) {
    if (l.kind == LayerKind::Dense && l.analyzed) out.push_back(l.name);
  }
  return out;
}

namespace {

struct CapturePlan {
  std::vector<std::size_t> layer_indices;
};

CapturePlan plan_capture(const Network& net, std::span<const std::string> layers) {
  CapturePlan plan;
  const std::vector<std::string> defaults = layers.empty() ? default_analyzed_layers(net) : std::vector<std::string>{};
  const std::span<const std::string> names = layers.empty() ? std::span<const std::string>(defaults) : layers;
  for (const auto& name : names) {
    const std::size_t idx = net.layer_index(name);
    if (net.layer(idx).kind != LayerKind::Dense) {
      throw Error(ErrorKind::Validation, "layer '" + name + "' is not a hidden dense layer");
    }
    plan.layer_indices.push_back(idx);
  }
  return plan;
}

ActivationDataset prepare(const Network& net, std::span<const LabeledSample> samples, SplitKind source,
                          const ConceptCatalog& catalog, const CapturePlan& plan) {
  catalog.validate_against(net.class_names());
  ActivationDataset ds;
  ds.source = source;
  ds.network_fingerprint = net.fingerprint();
  ds.concepts = catalog.concepts;
  ds.class_names = net.class_names();
  ds.samples.resize(samples.size());
  for (std::size_t idx : plan.layer_indices) {
    const auto& spec = net.layer(idx);
    ds.layers.push_back({spec.name, spec.output_dim, std::vector<float>(samples.size() * spec.output_dim)});
  }
  return ds;
}

void record_sample(ForwardPass& pass, const LabeledSample& sample, const CapturePlan& plan,
                   std::size_t s, ActivationDataset& ds) {
  const auto logits = pass.run_serial(sample.features);
  SampleMeta& meta = ds.samples[s];
  meta.id = sample.id;
  meta.true_class = sample.true_class;
  meta.predicted_class = argmax(logits);
  meta.correct = meta.predicted_class == sample.true_class;
  meta.concept_flags = sample.concept_flags;
  for (std::size_t l = 0; l < plan.layer_indices.size(); ++l) {
    const auto a = pass.activation(plan.layer_indices[l]);
    std::copy(a.begin(), a.end(), ds.layers[l].values.begin() + static_cast<std::ptrdiff_t>(s * a.size()));
  }
}

}  // namespace

ActivationDataset capture(const Network& net, std::span<const LabeledSample> samples, SplitKind source,
                          const ConceptCatalog& catalog, std::span<const std::string> layers) {
  const CapturePlan plan = plan_capture(net, layers);
  ActivationDataset ds = prepare(net, samples, source, catalog, plan);
  for (const auto& s : samples) {
    if (s.features.size() != net.input_dim()) {
      throw Error(ErrorKind::DimensionMismatch, "sample '" + s.id + "': expected " +
                                                    std::to_string(net.input_dim()) + " features");
    }
  }
  const auto n = static_cast<std::ptrdiff_t>(samples.size());
#pragma omp parallel
  {
    ForwardPass pass(net);
#pragma omp for schedule(static)
    for (std::ptrdiff_t s = 0; s < n; ++s) {
      record_sample(pass, samples[static_cast<std::size_t>(s)], plan, static_cast<std::size_t>(s), ds);
    }
  }
  return ds;
}

ActivationDataset capture_serial(const Network& net, std::span<const LabeledSample> samples, SplitKind source,
                                 const ConceptCatalog& catalog, std::span<const std::string> layers) {
  const CapturePlan plan = plan_capture(net, layers);
  ActivationDataset ds = prepare(net, samples, source, catalog, plan);
  ForwardPass pass(net);
  for (std::size_t s = 0; s < samples.size(); ++s) record_sample(pass, samples[s], plan, s, ds);
  return ds;
}

ActivationDataset filter_for_identification(const ActivationDataset& acts, bool include_misclassified) {
  if (include_misclassified) {
    if (acts.samples.empty()) throw Error(ErrorKind::IdentificationInputEmpty, "no samples for identification");
    return acts;
  }
  std::vector<std::size_t> keep;
  for (std::size_t s = 0; s < acts.samples.size(); ++s) {
    if (acts.samples[s].correct) keep.push_back(s);
  }
  if (keep.empty()) {
    throw Error(ErrorKind::IdentificationInputEmpty, "every sample is misclassified; nothing left to identify on");
  }
  ActivationDataset out;
  out.source = acts.source;
  out.network_fingerprint = acts.network_fingerprint;
  out.concepts = acts.concepts;
  out.class_names = acts.class_names;
  out.samples.reserve(keep.size());
  for (std::size_t s : keep) out.samples.push_back(acts.samples[s]);
  for (const auto& layer : acts.layers) {
    LayerActivations l{layer.layer, layer.width, {}};
    l.values.reserve(keep.size() * layer.width);
    for (std::size_t s : keep) {
      const auto row = layer.row(s);
      l.values.insert(l.values.end(), row.begin(), row.end());
    }
    out.layers.push_back(std::move(l));
  }
  return out;
}

namespace {

constexpr char kCacheMagic[8] = {'C', 'B', 'P', 'A', 'C', 'T', '0', '1'};

void write_string(std::ostream& out, const std::string& s) {
  write_u64_le(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& in) {
  const auto n = read_u64_le(in);
  if (n > (1u << 20)) throw Error(ErrorKind::Validation, "activation cache: implausible string length");
  std::string s(n, '\0');
  in.read(s.data(), static_cast<std::streamsize>(n));
  if (static_cast<std::uint64_t>(in.gcount()) != n) throw Error(ErrorKind::Io, "activation cache: truncated");
  return s;
}

}  // namespace

void save_activation_cache(const ActivationDataset& acts, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot open " + path.string() + " for writing");
  out.write(kCacheMagic, sizeof kCacheMagic);
  write_u64_le(out, acts.network_fingerprint);
  write_u64_le(out, acts.source == SplitKind::Train ? 0 : 1);
  write_u64_le(out, acts.concepts.size());
  for (const auto& c : acts.concepts) {
    write_string(out, c.name);
    write_u64_le(out, c.kind == ConceptKind::Class ? 0 : 1);
  }
  write_u64_le(out, acts.class_names.size());
  for (const auto& c : acts.class_names) write_string(out, c);
  write_u64_le(out, acts.layers.size());
  for (const auto& l : acts.layers) {
    write_string(out, l.layer);
    write_u64_le(out, l.width);
  }
  write_u64_le(out, acts.samples.size());
  for (const auto& s : acts.samples) {
    write_string(out, s.id);
    write_u64_le(out, s.true_class);
    write_u64_le(out, s.predicted_class);
    write_u64_le(out, s.correct ? 1 : 0);
    out.write(reinterpret_cast<const char*>(s.concept_flags.data()),
              static_cast<std::streamsize>(s.concept_flags.size()));
  }
  for (const auto& l : acts.layers) write_f32_le(out, l.values);
  if (!out) throw Error(ErrorKind::Io, "failed writing " + path.string());
}

ActivationDataset load_activation_cache(const std::filesystem::path& path,
                                        std::optional<std::uint64_t> expected_fingerprint) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  char magic[8] = {};
  in.read(magic, sizeof magic);
  if (!std::equal(std::begin(magic), std::end(magic), std::begin(kCacheMagic))) {
    throw Error(ErrorKind::Validation, path.string() + ": not an activation cache");
  }
  ActivationDataset acts;
  acts.network_fingerprint = read_u64_le(in);
  if (expected_fingerprint && *expected_fingerprint != acts.network_fingerprint) {
    throw Error(ErrorKind::FingerprintMismatch, path.string() + ": cached activations belong to network " +
                                                    hex64(acts.network_fingerprint) + ", expected " +
                                                    hex64(*expected_fingerprint));
  }
  acts.source = read_u64_le(in) == 0 ? SplitKind::Train : SplitKind::Test;
  const auto n_concepts = read_u64_le(in);
  for (std::uint64_t i = 0; i < n_concepts; ++i) {
    Concept c;
    c.name = read_string(in);
    c.kind = read_u64_le(in) == 0 ? ConceptKind::Class : ConceptKind::Feature;
    acts.concepts.push_back(std::move(c));
  }
  const auto n_classes = read_u64_le(in);
  for (std::uint64_t i = 0; i < n_classes; ++i) acts.class_names.push_back(read_string(in));
  const auto n_layers = read_u64_le(in);
  for (std::uint64_t i = 0; i < n_layers; ++i) {
    LayerActivations l;
    l.layer = read_string(in);
    l.width = read_u64_le(in);
    acts.layers.push_back(std::move(l));
  }
  const auto n_samples = read_u64_le(in);
  for (std::uint64_t i = 0; i < n_samples; ++i) {
    SampleMeta s;
    s.id = read_string(in);
    s.true_class = read_u64_le(in);
    s.predicted_class = read_u64_le(in);
    s.correct = read_u64_le(in) != 0;
    s.concept_flags.resize(n_concepts);
    in.read(reinterpret_cast<char*>(s.concept_flags.data()), static_cast<std::streamsize>(n_concepts));
    if (static_cast<std::uint64_t>(in.gcount()) != n_concepts) {
      throw Error(ErrorKind::Io, "activation cache: truncated");
    }
    acts.samples.push_back(std::move(s));
  }
  for (auto& l : acts.layers) {
    l.values.resize(n_samples * l.width);
    read_f32_le(in, l.values);
  }
  return acts;
}

}  // namespace cbp
