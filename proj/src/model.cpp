// Copyright 2026 The mixq Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "mixq/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "mixq/container.hpp"
#include "mixq/parallel.hpp"
#include "mixq/rng.hpp"

namespace mixq {

using nlohmann::json;

const char* to_string(Activation act) {
  return act == Activation::Identity ? "identity" : "tanh";
}

Activation activation_from_string(const std::string& s) {
  if (s == "identity") return Activation::Identity;
  if (s == "tanh") return Activation::Tanh;
  throw std::invalid_argument("unknown activation: " + s);
}

const char* to_string(PartitionRule rule) {
  return rule == PartitionRule::PerLayer ? "per-layer" : "fused-pairs";
}

PartitionRule partition_rule_from_string(const std::string& s) {
  if (s == "per-layer") return PartitionRule::PerLayer;
  if (s == "fused-pairs") return PartitionRule::FusedPairs;
  throw std::invalid_argument("unknown partition rule: " + s);
}

namespace {

// Seeded Gaussian matrix with every entry forced onto the f32 grid so the
// raw checkpoint round trip is bit-exact.
Matd gaussian_matrix(Index rows, Index cols, double stddev, Rng& rng) {
  Matd w(rows, cols);
  for (Index r = 0; r < rows; ++r) {
    for (Index c = 0; c < cols; ++c) {
      w(r, c) = static_cast<double>(static_cast<float>(stddev * rng.normal()));
    }
  }
  return w;
}

// Shifts all entries so the empirical centering inefficiency of the layer
// hits gamma_target: with R fixed under a shift, placing the dominant
// endpoint at sign * gamma * R / 2 hits the target exactly.
void apply_skew_shift(Matd& w, double gamma_target, bool positive_skew) {
  const double lo = w.minCoeff();
  const double hi = w.maxCoeff();
  const double range = hi - lo;
  if (range <= 0.0) return;
  const double target_abs = gamma_target * range / 2.0;
  const double shift = positive_skew ? target_abs - hi : -target_abs - lo;
  for (Index r = 0; r < w.rows(); ++r) {
    for (Index c = 0; c < w.cols(); ++c) {
      w(r, c) = static_cast<double>(static_cast<float>(w(r, c) + shift));
    }
  }
}

// The saturating nonlinearity centers pre-activations first; without the
// centering, the skew shift's common mode drives every unit into the same
// tanh tail and the dynamics collapse to two attractors.
void apply_activation(Vecd& pre, Activation act) {
  if (act == Activation::Identity) return;
  const double mean = pre.mean();
  for (Index j = 0; j < pre.size(); ++j) pre[j] = std::tanh(pre[j] - mean);
}

}  // namespace

SyntheticModel SyntheticModel::build(const ModelConfig& config) {
  if (config.hidden < 1 || config.vocab < 1 || config.depth < 1) {
    throw std::invalid_argument("model dimensions must be at least 1");
  }
  if (config.gamma_target < 1.0) {
    throw std::invalid_argument("gamma_target must be at least 1");
  }
  if (config.temperature <= 0.0) {
    throw std::invalid_argument("temperature must be positive");
  }
  std::vector<Layer> layers;
  layers.reserve(static_cast<std::size_t>(config.depth) + 1);
  const double block_std = 1.0 / std::sqrt(static_cast<double>(config.hidden));
  for (int i = 0; i < config.depth; ++i) {
    Rng rng(mix_seed(config.seed, static_cast<std::uint64_t>(i)));
    Matd w = gaussian_matrix(config.hidden, config.hidden, block_std, rng);
    apply_skew_shift(w, config.gamma_target, i % 2 == 0);
    layers.push_back({"layer_" + std::to_string(i), std::move(w), config.activation});
  }
  Rng head_rng(mix_seed(config.seed, static_cast<std::uint64_t>(config.depth)));
  Matd head = gaussian_matrix(config.vocab, config.hidden, block_std, head_rng);
  apply_skew_shift(head, config.gamma_target, config.depth % 2 == 0);
  layers.push_back({"head", std::move(head), Activation::Identity});
  return from_layers(config, std::move(layers));
}

SyntheticModel SyntheticModel::from_layers(ModelConfig config, std::vector<Layer> layers) {
  if (layers.empty() || layers.back().name != "head") {
    throw std::invalid_argument("last layer must be the head");
  }
  SyntheticModel m;
  m.config_ = config;
  m.layers_ = std::move(layers);
  for (std::size_t i = 0; i < m.layers_.size(); ++i) {
    if (!m.layers_[i].weight.allFinite()) {
      throw std::invalid_argument("non-finite weights in layer " + m.layers_[i].name);
    }
    if (!m.index_.emplace(m.layers_[i].name, i).second) {
      throw std::invalid_argument("duplicate layer name: " + m.layers_[i].name);
    }
  }
  return m;
}

const Layer& SyntheticModel::layer(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::invalid_argument("unknown layer: " + name);
  return layers_[it->second];
}

std::vector<std::string> SyntheticModel::layer_names() const {
  std::vector<std::string> names;
  names.reserve(layers_.size());
  for (const auto& l : layers_) names.push_back(l.name);
  return names;
}

long SyntheticModel::total_parameters() const {
  long total = 0;
  for (const auto& l : layers_) total += static_cast<long>(l.weight.size());
  return total;
}

CalibrationSet generate_calibration(int hidden, Index positions, std::uint64_t seed) {
  if (positions < 1) throw std::invalid_argument("calibration set must be non-empty");
  CalibrationSet calib;
  calib.seed = seed;
  calib.inputs.resize(positions, hidden);
  for (Index i = 0; i < positions; ++i) {
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(i)));
    for (Index j = 0; j < hidden; ++j) calib.inputs(i, j) = rng.normal();
  }
  return calib;
}

namespace {

// Stable softmax; writes probabilities in place and returns the entropy.
double softmax_entropy(Vecd& logits) {
  const double max_logit = logits.maxCoeff();
  double sum = 0.0;
  for (Index k = 0; k < logits.size(); ++k) {
    logits[k] = std::exp(logits[k] - max_logit);
    sum += logits[k];
  }
  double entropy = 0.0;
  for (Index k = 0; k < logits.size(); ++k) {
    logits[k] /= sum;
    if (logits[k] > 0.0) entropy -= logits[k] * std::log(logits[k]);
  }
  return entropy;
}

}  // namespace

DistributionSnapshot forward_snapshot(const SyntheticModel& model,
                                      const CalibrationSet& calib,
                                      const WeightOverrides& overrides, int K,
                                      const DistributionSnapshot* support, int threads) {
  const int vocab = model.config().vocab;
  if (K < 1 || K > vocab) throw std::invalid_argument("K must be in [1, vocab]");
  if (support != nullptr &&
      (support->positions() != calib.size() || support->K != K)) {
    throw std::invalid_argument("support snapshot does not match calibration set");
  }

  // Resolve weight substitutions once, outside the position loop.
  std::vector<const Matd*> weights;
  weights.reserve(model.layers().size());
  for (const auto& l : model.layers()) {
    auto it = overrides.find(l.name);
    weights.push_back(it == overrides.end() ? &l.weight : &it->second);
  }

  const Index n = calib.size();
  DistributionSnapshot snap;
  snap.K = K;
  snap.vocab = vocab;
  snap.ids.resize(n, K);
  snap.probs.resize(n, K);
  snap.entropy.resize(n);
  snap.argmax.resize(n);

  const double inv_temp = 1.0 / model.config().temperature;
  const int depth = model.num_layers() - 1;

  parallel_for(n, threads, [&](std::int64_t i) {
    Vecd h = calib.inputs.row(i).transpose();
    for (int b = 0; b < depth; ++b) {
      Vecd pre = (*weights[b]) * h;
      apply_activation(pre, model.layers()[b].act);
      h = std::move(pre);
    }
    Vecd probs = (*weights[depth]) * h * inv_temp;
    snap.entropy[i] = softmax_entropy(probs);

    Index arg = 0;
    probs.maxCoeff(&arg);
    snap.argmax[i] = static_cast<std::int32_t>(arg);

    if (support != nullptr) {
      for (int k = 0; k < K; ++k) {
        snap.ids(i, k) = support->ids(i, k);
        snap.probs(i, k) = probs[support->ids(i, k)];
      }
      return;
    }
    // Own top-K, sorted by descending probability, ties to lowest id.
    std::vector<int> order(vocab);
    std::iota(order.begin(), order.end(), 0);
    std::partial_sort(order.begin(), order.begin() + K, order.end(),
                      [&](int a, int b) {
                        if (probs[a] != probs[b]) return probs[a] > probs[b];
                        return a < b;
                      });
    for (int k = 0; k < K; ++k) {
      snap.ids(i, k) = order[k];
      snap.probs(i, k) = probs[order[k]];
    }
  });
  return snap;
}

std::vector<WeightGroup> partition_groups(const SyntheticModel& model, PartitionRule rule,
                                          const std::vector<std::string>& exclude) {
  auto excluded = [&](const std::string& name) {
    return std::find(exclude.begin(), exclude.end(), name) != exclude.end();
  };
  for (const auto& name : exclude) {
    model.layer(name);  // unknown exclusions are config errors
  }

  std::vector<const Layer*> blocks;
  const Layer* head = nullptr;
  for (const auto& l : model.layers()) {
    if (excluded(l.name)) continue;
    if (l.name == "head") {
      head = &l;
    } else {
      blocks.push_back(&l);
    }
  }

  std::vector<WeightGroup> groups;
  auto push_group = [&](std::vector<const Layer*> members) {
    WeightGroup g;
    g.id = static_cast<int>(groups.size());
    for (const Layer* l : members) {
      g.members.push_back(l->name);
      g.parameter_count += static_cast<long>(l->weight.size());
    }
    groups.push_back(std::move(g));
  };

  if (rule == PartitionRule::PerLayer) {
    for (const Layer* l : blocks) push_group({l});
  } else {
    for (std::size_t i = 0; i < blocks.size(); i += 2) {
      if (i + 1 < blocks.size()) {
        push_group({blocks[i], blocks[i + 1]});
      } else {
        push_group({blocks[i]});
      }
    }
  }
  if (head != nullptr) push_group({head});
  return groups;
}

double average_bitwidth(const QuantSpec& spec, const std::vector<WeightGroup>& groups) {
  if (spec.bits.size() != groups.size()) {
    throw std::invalid_argument("spec does not cover all groups");
  }
  double bit_sum = 0.0;
  double size_sum = 0.0;
  for (const auto& g : groups) {
    bit_sum += static_cast<double>(spec.bits[g.id]) * static_cast<double>(g.parameter_count);
    size_sum += static_cast<double>(g.parameter_count);
  }
  return bit_sum / size_sum;
}

double average_effective_bits(const QuantSpec& spec, const std::vector<WeightGroup>& groups) {
  if (spec.bits.size() != groups.size()) {
    throw std::invalid_argument("spec does not cover all groups");
  }
  double bit_sum = 0.0;
  double size_sum = 0.0;
  for (const auto& g : groups) {
    const BitAccount acc = effective_bits(spec.bits[g.id], spec.group_size, spec.mode);
    bit_sum += acc.effective_bits * static_cast<double>(g.parameter_count);
    size_sum += static_cast<double>(g.parameter_count);
  }
  return bit_sum / size_sum;
}

DistributionSnapshot forward_distributions(const SyntheticModel& model,
                                           const CalibrationSet& calib,
                                           const std::optional<QuantSpec>& spec,
                                           const std::vector<WeightGroup>& groups, int K,
                                           int threads) {
  if (!spec.has_value()) {
    return forward_snapshot(model, calib, {}, K, nullptr, threads);
  }
  if (spec->bits.size() != groups.size()) {
    throw std::invalid_argument("spec does not cover all groups");
  }
  DistributionSnapshot reference = forward_snapshot(model, calib, {}, K, nullptr, threads);
  WeightOverrides overrides;
  for (const auto& g : groups) {
    for (const auto& name : g.members) {
      const Matd& w = model.layer(name).weight;
      overrides[name] =
          dequantize(group_quantize(w, spec->bits[g.id], spec->group_size, spec->mode));
    }
  }
  return forward_snapshot(model, calib, overrides, K, &reference, threads);
}

namespace {

json model_manifest(const SyntheticModel& model,
                    const std::vector<std::pair<std::string, std::string>>& layer_hashes) {
  const ModelConfig& cfg = model.config();
  json layers = json::array();
  std::string combined =
      std::to_string(cfg.seed) + "|" + std::to_string(cfg.gamma_target) + "|";
  for (const auto& [name, hash] : layer_hashes) {
    const Layer& l = model.layer(name);
    layers.push_back({{"name", name},
                      {"rows", l.weight.rows()},
                      {"cols", l.weight.cols()},
                      {"activation", to_string(l.act)},
                      {"file", "weights/" + name + ".slqw"},
                      {"fnv1a64", hash}});
    combined += name + ":" + hash + "|";
  }
  const std::uint64_t model_hash = io::fnv1a64(combined.data(), combined.size());
  json manifest = {{"format_version", 1},
                   {"hidden", cfg.hidden},
                   {"vocab", cfg.vocab},
                   {"depth", cfg.depth},
                   {"gamma_target", cfg.gamma_target},
                   {"temperature", cfg.temperature},
                   {"activation", to_string(cfg.activation)},
                   {"seed", cfg.seed},
                   {"layers", layers}};
  std::ostringstream h;
  h << std::hex;
  for (int i = 60; i >= 0; i -= 4) h << ((model_hash >> i) & 0xf);
  manifest["model_hash"] = h.str();
  return manifest;
}

}  // namespace

void save_model(const SyntheticModel& model, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir / "weights", ec);
  if (ec) throw IoError("cannot create checkpoint directory: " + dir.string());

  std::vector<std::pair<std::string, std::string>> layer_hashes;
  for (const auto& l : model.layers()) {
    const auto path = dir / "weights" / (l.name + ".slqw");
    io::write_raw_file(path, l.weight);
    layer_hashes.emplace_back(l.name, io::fnv1a64_hex(io::read_file_bytes(path)));
  }
  const json manifest = model_manifest(model, layer_hashes);
  std::ofstream os(dir / "manifest.json", std::ios::trunc);
  if (!os) throw IoError("cannot write manifest: " + (dir / "manifest.json").string());
  os << manifest.dump(2) << "\n";
  if (!os.flush()) throw IoError("manifest write failed");
}

SyntheticModel load_model(const std::filesystem::path& dir) {
  std::ifstream is(dir / "manifest.json");
  if (!is) throw IoError("cannot open manifest: " + (dir / "manifest.json").string());
  json manifest;
  try {
    is >> manifest;
  } catch (const json::exception& e) {
    throw ParseError(std::string("invalid manifest: ") + e.what());
  }

  ModelConfig cfg;
  std::vector<Layer> layers;
  std::vector<std::pair<std::string, std::string>> layer_hashes;
  try {
    cfg.hidden = manifest.at("hidden").get<int>();
    cfg.vocab = manifest.at("vocab").get<int>();
    cfg.depth = manifest.at("depth").get<int>();
    cfg.gamma_target = manifest.at("gamma_target").get<double>();
    cfg.temperature = manifest.at("temperature").get<double>();
    cfg.activation = activation_from_string(manifest.at("activation").get<std::string>());
    cfg.seed = manifest.at("seed").get<std::uint64_t>();
    for (const auto& entry : manifest.at("layers")) {
      const auto name = entry.at("name").get<std::string>();
      const auto file = entry.at("file").get<std::string>();
      const auto expected_hash = entry.at("fnv1a64").get<std::string>();
      const auto path = dir / file;
      const auto bytes = io::read_file_bytes(path);
      if (io::fnv1a64_hex(bytes) != expected_hash) {
        throw IoError("integrity error: tensor hash mismatch for layer " + name);
      }
      Layer l;
      l.name = name;
      l.weight = io::read_raw_file(path);
      l.act = activation_from_string(entry.at("activation").get<std::string>());
      if (l.weight.rows() != entry.at("rows").get<Index>() ||
          l.weight.cols() != entry.at("cols").get<Index>()) {
        throw ParseError("tensor shape does not match manifest for layer " + name);
      }
      layers.push_back(std::move(l));
      layer_hashes.emplace_back(name, expected_hash);
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("invalid manifest: ") + e.what());
  }

  SyntheticModel model = SyntheticModel::from_layers(cfg, std::move(layers));
  const json expected = model_manifest(model, layer_hashes);
  if (manifest.at("model_hash") != expected.at("model_hash")) {
    throw IoError("integrity error: manifest hash does not match seed and tensors");
  }
  return model;
}

}  // namespace mixq
