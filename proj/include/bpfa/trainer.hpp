#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "bpfa/metrics.hpp"
#include "bpfa/network.hpp"
#include "bpfa/synth_faces.hpp"
#include "bpfa/zoo.hpp"

namespace bpfa {

struct TrainConfig {
  std::size_t epochs = 80;
  double learning_rate = 0.02;
  std::size_t batch_size = 32;
  std::uint64_t seed = 1;
  Architecture architecture = Architecture::C;
  std::size_t embedding_dim = 64;

  double momentum = 0.9;
  double weight_decay = 5e-4;
  /// Cosine-softmax head: logits s * (cos - m [k == y]).
  double cosine_scale = 8.0;
  double cosine_margin = 0.2;

  bool adversarial_training = false;
  double adv_epsilon = 10.0;
  std::size_t adv_steps = 5;

  /// Minimum held-out pair accuracy at the EER threshold.
  double accuracy_floor = 0.95;

  void validate() const;
};

struct TrainLogEntry {
  std::size_t step = 0;
  double loss = 0.0;
  double accuracy = 0.0;  // identity classification accuracy on the batch
};

struct TrainResult {
  SegmentedNetwork net;
  std::vector<TrainLogEntry> log;
  VerificationScore verification;
};

/// Trains an embedding network with a cosine-softmax identity head on the
/// training split. Deterministic in cfg.seed.
TrainResult train(const IdentityDataset& ds, const TrainConfig& cfg);

/// Same recipe with every sample paired with a dodging example crafted by
/// a few FIM steps on the current weights. adv_steps == 0 reduces to train().
TrainResult adversarial_train(const IdentityDataset& ds, const TrainConfig& cfg);

/// Sets batchnorm running statistics to the population statistics of the
/// given images, layer by layer.
void recompute_batchnorm_statistics(SegmentedNetwork& net, const IdentityDataset& ds,
                                    const std::vector<std::size_t>& indices);

void write_train_log_csv(const std::vector<TrainLogEntry>& log, const std::filesystem::path& path);

enum class DistanceMetric { NormalizedSquaredEuclidean };

struct Threshold {
  double value = 0.0;
  double far_target = 0.0;
  double achieved_far = 0.0;
  std::size_t n_negatives = 0;
  DistanceMetric metric = DistanceMetric::NormalizedSquaredEuclidean;
};

/// Threshold t such that the fraction of negative distances below t is the
/// closest achievable value to far_target. Requires at least 1 / far_target
/// distances; far_target must lie in (0, 1].
Threshold calibrate_from_distances(std::vector<double> negative_distances, double far_target);

Threshold calibrate_threshold(const SegmentedNetwork& net, const IdentityDataset& ds, double far_target,
                              DistanceMetric metric = DistanceMetric::NormalizedSquaredEuclidean);

/// Fraction of `distances` strictly below `threshold`.
double false_accept_rate(const std::vector<double>& distances, double threshold);

void save_threshold(const Threshold& t, const std::filesystem::path& path);
Threshold load_threshold(const std::filesystem::path& path);

}  // namespace bpfa
