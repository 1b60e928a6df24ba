#pragma once

#include <span>
#include <vector>

#include "bpfa/network.hpp"
#include "bpfa/synth_faces.hpp"

namespace bpfa {

/// L2-normalized embeddings of `images`.
std::vector<Tensor> embed_normalized(const SegmentedNetwork& net, std::span<const Tensor> images);

/// Verification distance: squared Euclidean distance of normalized embeddings.
double embedding_distance(const Tensor& normalized_a, const Tensor& normalized_b);

/// Distances of every unordered negative pair over the whole dataset.
std::vector<double> negative_pair_distances(const SegmentedNetwork& net, const IdentityDataset& ds);

struct VerificationScore {
  double accuracy = 0.0;   // (TPR + TNR) / 2 at the EER threshold
  double threshold = 0.0;
  std::size_t positives = 0;
  std::size_t negatives = 0;
  double triplet_accuracy = 0.0;  // fraction of (anchor, pos, neg) with d(a,p) < d(a,n)
};

/// Pair verification on the held-out split: every positive and negative
/// unordered pair among held-out images.
VerificationScore verification_accuracy(const SegmentedNetwork& net, const IdentityDataset& ds);

}  // namespace bpfa
