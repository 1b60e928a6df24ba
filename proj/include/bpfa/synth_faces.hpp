#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "bpfa/tensor.hpp"

namespace bpfa {

/// Generator settings for the synthetic identity dataset. Pixel values are
/// on the [0, 255] scale.
struct DatasetParams {
  std::size_t num_identities = 20;
  std::size_t images_per_identity = 20;
  std::size_t height = 16;
  std::size_t width = 16;
  std::uint64_t seed = 7;

  /// Identity prototypes: zero-mean cosine-basis fields up to this frequency.
  std::size_t prototype_frequencies = 8;
  double prototype_amplitude = 8.0;

  /// Per-sample low-frequency field, integer shift and pixel noise.
  std::size_t jitter_frequencies = 3;
  double jitter = 3.0;
  std::size_t max_shift = 0;
  double noise = 1.0;

  /// The last `holdout_per_identity` images of every identity are never
  /// used for training.
  std::size_t holdout_per_identity = 5;
};

struct IdentityDataset {
  DatasetParams params;
  std::vector<Tensor> images;  // image index = identity * M + sample
  std::vector<std::size_t> labels;

  /// Generation-time statistics over sampled pairs (mean squared pixel
  /// distance) and the warning flags derived from them.
  double mean_within_distance = 0.0;
  double mean_between_distance = 0.0;
  bool separable = false;
  bool degenerate = false;  // zero jitter/shift/noise makes samples duplicates

  std::size_t size() const noexcept { return images.size(); }
  Shape image_shape() const { return {1, params.height, params.width}; }
  std::size_t index_of(std::size_t identity, std::size_t sample) const;
  bool is_holdout(std::size_t index) const;
  std::vector<std::size_t> train_indices() const;
  std::vector<std::size_t> holdout_indices() const;
};

IdentityDataset generate(const DatasetParams& params);

enum class Polarity { Negative, Positive };
enum class PairPool { All, Holdout };

std::string_view to_string(Polarity p);
Polarity parse_polarity(std::string_view text);

struct FacePair {
  std::size_t attacker_index = 0;
  std::size_t target_index = 0;
  std::size_t attacker_id = 0;
  std::size_t target_id = 0;
  Polarity polarity = Polarity::Negative;

  friend bool operator==(const FacePair&, const FacePair&) = default;
};

/// Distinct ordered pairs drawn without replacement from `pool`.
std::vector<FacePair> sample_pairs(const IdentityDataset& ds, std::size_t n_pairs, Polarity polarity,
                                   std::uint64_t seed, PairPool pool = PairPool::Holdout);

/// Generic image container:
///   "BPFADATA" | u32 version | header JSON | u64 count | per image: shape JSON + float64 blob
struct ImageContainer {
  std::string header_json = "{}";
  std::vector<Tensor> images;
  std::vector<std::size_t> labels;
};

void save_images(const ImageContainer& c, const std::filesystem::path& path);
ImageContainer load_images(const std::filesystem::path& path);

void save_dataset(const IdentityDataset& ds, const std::filesystem::path& path);
IdentityDataset load_dataset(const std::filesystem::path& path);

/// CSV with header "attacker_idx,target_idx,polarity".
void save_pairs(const std::vector<FacePair>& pairs, const std::filesystem::path& path);
std::vector<FacePair> load_pairs(const IdentityDataset& ds, const std::filesystem::path& path);

}  // namespace bpfa
