#include "cbp/metrics.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "cbp/error.hpp"

namespace cbp {

std::vector<ConfusionCounts> per_concept_confusion(std::span<const std::size_t> predicted,
                                                   std::span<const std::size_t> truth,
                                                   std::span<const std::size_t> scope) {
  if (predicted.size() != truth.size()) {
    throw Error(ErrorKind::DimensionMismatch, "confusion: predictions and labels differ in length");
  }
  std::vector<ConfusionCounts> out(scope.size());
  for (std::size_t s = 0; s < predicted.size(); ++s) {
    for (std::size_t k = 0; k < scope.size(); ++k) {
      const std::size_t c = scope[k];
      const bool said = predicted[s] == c;
      const bool is = truth[s] == c;
      if (said && is) {
        ++out[k].tp;
      } else if (said) {
        ++out[k].fp;
      } else if (is) {
        ++out[k].fn;
      } else {
        ++out[k].tn;
      }
    }
  }
  return out;
}

ConfusionCounts confusion(std::span<const std::size_t> predicted, std::span<const std::size_t> truth,
                          std::span<const std::size_t> scope) {
  ConfusionCounts total;
  for (const auto& c : per_concept_confusion(predicted, truth, scope)) total += c;
  return total;
}

ConfusionCounts confusion(std::span<const Prediction> predictions, std::span<const LabeledSample> labels,
                          std::span<const std::size_t> scope) {
  if (predictions.size() != labels.size()) {
    throw Error(ErrorKind::DimensionMismatch, "confusion: predictions and labels differ in length");
  }
  std::vector<std::size_t> pred(predictions.size());
  std::vector<std::size_t> truth(labels.size());
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (predictions[i].id != labels[i].id) {
      throw Error(ErrorKind::Validation, "confusion: prediction '" + predictions[i].id +
                                             "' is not aligned with sample '" + labels[i].id + "'");
    }
    pred[i] = predictions[i].predicted_class;
    truth[i] = labels[i].true_class;
  }
  return confusion(pred, truth, scope);
}

ConfusionCounts confusion(const ActivationDataset& acts, std::span<const std::size_t> scope) {
  std::vector<std::size_t> pred;
  std::vector<std::size_t> truth;
  for (const auto& s : acts.samples) {
    pred.push_back(s.predicted_class);
    truth.push_back(s.true_class);
  }
  return confusion(pred, truth, scope);
}

namespace {

std::optional<double> ratio(std::uint64_t num, std::uint64_t den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

EffectivenessReport effectiveness(const ConfusionCounts& c) {
  return {ratio(c.tp + c.tn, c.total()), ratio(c.tp, c.tp + c.fp), ratio(c.tp, c.tp + c.fn),
          ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn)};
}

EffectivenessReport macro_effectiveness(std::span<const ConfusionCounts> per_concept) {
  struct Mean {
    double sum = 0;
    std::size_t n = 0;
    void add(const std::optional<double>& v) {
      if (v) {
        sum += *v;
        ++n;
      }
    }
    std::optional<double> get() const { return n == 0 ? std::nullopt : std::optional(sum / static_cast<double>(n)); }
  };
  Mean acc, prec, rec, f1;
  for (const auto& c : per_concept) {
    const auto e = effectiveness(c);
    acc.add(e.accuracy);
    prec.add(e.precision);
    rec.add(e.recall);
    f1.add(e.f1);
  }
  return {acc.get(), prec.get(), rec.get(), f1.get()};
}

LatencyReport latency_from_samples(std::span<const double> samples_ms) {
  if (samples_ms.size() < 2) throw Error(ErrorKind::Config, "latency needs at least 2 timed runs");
  const double n = static_cast<double>(samples_ms.size());
  const double mean = std::accumulate(samples_ms.begin(), samples_ms.end(), 0.0) / n;
  double ss = 0;
  for (double v : samples_ms) ss += (v - mean) * (v - mean);
  LatencyReport r;
  r.mean_ms = mean;
  r.std_ms = std::sqrt(ss / (n - 1));
  r.fps = 1000.0 / mean;
  return r;
}

LatencyReport benchmark_latency(const Network& net, std::span<const float> sample, int runs) {
  if (runs < 2) throw Error(ErrorKind::Config, "latency needs at least 2 timed runs");
  ForwardPass pass(net);
  pass.run_serial(sample);
  std::vector<double> times;
  times.reserve(static_cast<std::size_t>(runs));
  using clock = std::chrono::steady_clock;
  for (int i = 0; i < runs; ++i) {
    const auto t0 = clock::now();
    pass.run_serial(sample);
    const auto t1 = clock::now();
    times.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  return latency_from_samples(times);
}

SizeReport size_report(std::span<const LayerSpec> layers, std::span<const std::string> analyzed) {
  SizeReport r;
  const MacCount macs = mac_count(layers);
  for (const auto& name : analyzed) {
    const auto idx = find_layer(layers, name);
    if (!idx) throw Error(ErrorKind::Validation, "size report: unknown layer '" + name + "'");
    r.neurons.emplace_back(name, layers[*idx].output_dim);
    r.macs.emplace_back(name, macs.per_layer[*idx]);
  }
  r.params = param_count(layers);
  r.size_mb = bytes_to_mb(size_bytes(layers));
  r.total_macs = macs.total;
  return r;
}

std::vector<std::string> metrics_header(std::span<const std::string> analyzed) {
  std::vector<std::string> h{"iteration"};
  for (const auto& l : analyzed) h.push_back(l);
  for (const char* c : {"params_m", "size_mb", "accuracy", "precision", "recall", "f1"}) h.emplace_back(c);
  for (const auto& l : analyzed) h.push_back("macs_" + l + "_m");
  for (const char* c : {"total_macs_g", "latency_ms", "latency_std_ms", "fps", "t_identifier_s", "t_pruner_s",
                        "t_total_s"}) {
    h.emplace_back(c);
  }
  return h;
}

std::vector<std::string> metrics_fields(const MetricsRow& row) {
  std::vector<std::string> f{std::to_string(row.iteration)};
  for (const auto& [_, n] : row.size.neurons) f.push_back(std::to_string(n));
  f.push_back(format_fixed(static_cast<double>(row.size.params) / 1e6, 2));
  f.push_back(format_fixed(row.size.size_mb, 2));
  auto pct = [](const std::optional<double>& v) {
    return v ? std::optional<double>(*v * 100.0) : std::nullopt;
  };
  f.push_back(format_optional(pct(row.effectiveness.accuracy), 2));
  f.push_back(format_optional(pct(row.effectiveness.precision), 2));
  f.push_back(format_optional(pct(row.effectiveness.recall), 2));
  f.push_back(format_optional(pct(row.effectiveness.f1), 2));
  for (const auto& [_, m] : row.size.macs) f.push_back(format_fixed(static_cast<double>(m) / 1e6, 2));
  f.push_back(format_fixed(static_cast<double>(row.size.total_macs) / 1e9, 3));
  if (row.latency) {
    f.push_back(format_fixed(row.latency->mean_ms, 2));
    f.push_back(format_fixed(row.latency->std_ms, 2));
    f.push_back(format_fixed(row.latency->fps, 2));
  } else {
    f.insert(f.end(), 3, kAbsent);
  }
  f.push_back(format_optional(row.t_identifier_s, 2));
  f.push_back(format_optional(row.t_pruner_s, 2));
  f.push_back(format_optional(row.t_total_s, 2));
  return f;
}

bool is_timing_column(const std::string& name) {
  return name == "latency_ms" || name == "latency_std_ms" || name == "fps" || name == "t_identifier_s" ||
         name == "t_pruner_s" || name == "t_total_s";
}

std::string format_fixed(double value, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, value);
  std::string s = buf;
  if (s.starts_with("-") && s.find_first_not_of("-0.") == std::string::npos) s.erase(0, 1);
  return s;
}

std::string format_optional(const std::optional<double>& value, int decimals) {
  return value ? format_fixed(*value, decimals) : std::string(kAbsent);
}

std::string join_csv(std::span<const std::string> fields) {
  std::string out;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out += ',';
    out += fields[i];
  }
  return out;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) {
    if (!field.empty() && field.back() == '\r') field.pop_back();
    out.push_back(field);
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace cbp
