#include "bpfa/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "bpfa/error.hpp"

namespace bpfa {

std::vector<Tensor> embed_normalized(const SegmentedNetwork& net, std::span<const Tensor> images) {
  std::vector<Tensor> out;
  out.reserve(images.size());
  for (const auto& img : images) out.push_back(l2_normalize(forward_plain(net, img)));
  return out;
}

double embedding_distance(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

std::vector<double> negative_pair_distances(const SegmentedNetwork& net, const IdentityDataset& ds) {
  const auto emb = embed_normalized(net, ds.images);
  std::vector<double> d;
  for (std::size_t i = 0; i < emb.size(); ++i) {
    for (std::size_t j = i + 1; j < emb.size(); ++j) {
      if (ds.labels[i] != ds.labels[j]) d.push_back(embedding_distance(emb[i], emb[j]));
    }
  }
  return d;
}

VerificationScore verification_accuracy(const SegmentedNetwork& net, const IdentityDataset& ds) {
  const auto idx = ds.holdout_indices();
  std::vector<Tensor> imgs;
  for (auto i : idx) imgs.push_back(ds.images[i]);
  const auto emb = embed_normalized(net, imgs);

  std::vector<double> pos, neg;
  for (std::size_t a = 0; a < idx.size(); ++a) {
    for (std::size_t b = a + 1; b < idx.size(); ++b) {
      const double d = embedding_distance(emb[a], emb[b]);
      (ds.labels[idx[a]] == ds.labels[idx[b]] ? pos : neg).push_back(d);
    }
  }
  if (pos.empty() || neg.empty()) fail(ErrorKind::Precondition, "held-out split needs positive and negative pairs");
  std::sort(pos.begin(), pos.end());
  std::sort(neg.begin(), neg.end());

  // Scan candidate thresholds; pairs with d < t are accepted.
  std::vector<double> candidates = pos;
  candidates.insert(candidates.end(), neg.begin(), neg.end());
  std::sort(candidates.begin(), candidates.end());
  VerificationScore best;
  best.positives = pos.size();
  best.negatives = neg.size();
  double best_gap = 2.0;
  for (std::size_t k = 0; k <= candidates.size(); ++k) {
    const double t = k == candidates.size() ? candidates.back() + 1.0 : candidates[k];
    const double tpr = static_cast<double>(std::lower_bound(pos.begin(), pos.end(), t) - pos.begin()) / pos.size();
    const double far = static_cast<double>(std::lower_bound(neg.begin(), neg.end(), t) - neg.begin()) / neg.size();
    const double gap = std::abs((1.0 - tpr) - far);
    if (gap < best_gap) {
      best_gap = gap;
      best.threshold = t;
      best.accuracy = 0.5 * (tpr + 1.0 - far);
    }
  }

  std::size_t ok = 0, total = 0;
  for (std::size_t a = 0; a < idx.size(); ++a) {
    for (std::size_t p = 0; p < idx.size(); ++p) {
      if (p == a || ds.labels[idx[p]] != ds.labels[idx[a]]) continue;
      const double dp = embedding_distance(emb[a], emb[p]);
      for (std::size_t n = 0; n < idx.size(); ++n) {
        if (ds.labels[idx[n]] == ds.labels[idx[a]]) continue;
        ok += dp < embedding_distance(emb[a], emb[n]);
        ++total;
      }
    }
  }
  best.triplet_accuracy = total ? static_cast<double>(ok) / total : 0.0;
  return best;
}

}  // namespace bpfa
