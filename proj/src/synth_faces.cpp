#include "bpfa/synth_faces.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <json.hpp>
#include <numbers>
#include <set>
#include <sstream>

#include "bpfa/error.hpp"
#include "bpfa/random.hpp"
#include "bpfa/serial.hpp"

namespace bpfa {

namespace {

using nlohmann::json;

constexpr char kMagic[8] = {'B', 'P', 'F', 'A', 'D', 'A', 'T', 'A'};
constexpr std::uint32_t kContainerVersion = 1;

/// Sum of separable cosine modes cos(pi u (x+.5)/W) cos(pi v (y+.5)/H) for
/// u + v < freqs, with amplitudes decaying as 1 / (1 + u + v). The constant
/// mode is optional.
std::vector<double> smooth_field(Rng& rng, std::size_t H, std::size_t W, std::size_t freqs,
                                 double amplitude, bool with_dc) {
  std::vector<double> field(H * W, 0.0);
  if (amplitude == 0.0 || freqs == 0) return field;
  for (std::size_t u = 0; u < freqs; ++u) {
    for (std::size_t v = 0; u + v < freqs; ++v) {
      if (u == 0 && v == 0 && !with_dc) continue;
      const double a = amplitude * standard_normal(rng) / static_cast<double>(1 + u + v);
      for (std::size_t y = 0; y < H; ++y) {
        const double cy = std::cos(std::numbers::pi * static_cast<double>(v) * (y + 0.5) / H);
        for (std::size_t x = 0; x < W; ++x) {
          const double cx = std::cos(std::numbers::pi * static_cast<double>(u) * (x + 0.5) / W);
          field[y * W + x] += a * cx * cy;
        }
      }
    }
  }
  return field;
}

/// Shared face-like layout: bright oval on a darker background.
std::vector<double> face_template(std::size_t H, std::size_t W) {
  std::vector<double> t(H * W);
  const double cy = (H - 1) / 2.0, cx = (W - 1) / 2.0;
  const double sy = 0.42 * H, sx = 0.32 * W;
  for (std::size_t y = 0; y < H; ++y) {
    for (std::size_t x = 0; x < W; ++x) {
      const double dy = (y - cy) / sy, dx = (x - cx) / sx;
      t[y * W + x] = 70.0 + 90.0 * std::exp(-0.5 * (dx * dx + dy * dy));
    }
  }
  return t;
}

double sq_distance(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

}  // namespace

std::size_t IdentityDataset::index_of(std::size_t identity, std::size_t sample) const {
  return identity * params.images_per_identity + sample;
}

bool IdentityDataset::is_holdout(std::size_t index) const {
  const std::size_t m = params.images_per_identity;
  return index % m >= m - params.holdout_per_identity;
}

std::vector<std::size_t> IdentityDataset::train_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (!is_holdout(i)) out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> IdentityDataset::holdout_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (is_holdout(i)) out.push_back(i);
  }
  return out;
}

IdentityDataset generate(const DatasetParams& params) {
  const std::size_t K = params.num_identities, M = params.images_per_identity;
  const std::size_t H = params.height, W = params.width;
  if (K < 2 || M < 2) fail(ErrorKind::Config, "dataset needs at least 2 identities and 2 images each");
  if (H == 0 || W == 0) fail(ErrorKind::Config, "image size must be positive");
  if (params.holdout_per_identity >= M) {
    fail(ErrorKind::Config, "holdout_per_identity must leave at least one training image");
  }
  if (params.noise < 0 || params.jitter < 0 || params.prototype_amplitude < 0) {
    fail(ErrorKind::Config, "generator amplitudes must be non-negative");
  }

  IdentityDataset ds;
  ds.params = params;
  ds.images.reserve(K * M);
  const std::vector<double> base = face_template(H, W);
  const long shift = static_cast<long>(params.max_shift);

  for (std::size_t id = 0; id < K; ++id) {
    Rng proto_rng = make_rng(derive_seed(derive_seed(params.seed, "prototype"), id));
    std::vector<double> proto =
        smooth_field(proto_rng, H, W, params.prototype_frequencies, params.prototype_amplitude, false);
    for (std::size_t k = 0; k < proto.size(); ++k) proto[k] += base[k];

    for (std::size_t m = 0; m < M; ++m) {
      Rng rng = make_rng(derive_seed(derive_seed(params.seed, "sample"), id * M + m));
      const std::vector<double> jitter =
          smooth_field(rng, H, W, params.jitter_frequencies, params.jitter, true);
      long dy = 0, dx = 0;
      if (shift > 0) {
        dy = static_cast<long>(uniform_index(rng, 2 * shift + 1)) - shift;
        dx = static_cast<long>(uniform_index(rng, 2 * shift + 1)) - shift;
      }
      Tensor img({1, H, W});
      for (std::size_t y = 0; y < H; ++y) {
        for (std::size_t x = 0; x < W; ++x) {
          const long sy = std::clamp(static_cast<long>(y) + dy, 0L, static_cast<long>(H) - 1);
          const long sx = std::clamp(static_cast<long>(x) + dx, 0L, static_cast<long>(W) - 1);
          double v = proto[static_cast<std::size_t>(sy) * W + static_cast<std::size_t>(sx)] +
                     jitter[y * W + x];
          if (params.noise > 0) v += params.noise * standard_normal(rng);
          img[y * W + x] = std::clamp(v, 0.0, 255.0);
        }
      }
      ds.images.push_back(std::move(img));
      ds.labels.push_back(id);
    }
  }

  Rng stats_rng = make_rng(derive_seed(params.seed, "statistics"));
  constexpr int kStatPairs = 1000;
  double within = 0.0, between = 0.0;
  for (int k = 0; k < kStatPairs; ++k) {
    const std::size_t id = uniform_index(stats_rng, K);
    const std::size_t a = uniform_index(stats_rng, M);
    const std::size_t b = (a + 1 + uniform_index(stats_rng, M - 1)) % M;
    within += sq_distance(ds.images[ds.index_of(id, a)], ds.images[ds.index_of(id, b)]);
    const std::size_t i1 = uniform_index(stats_rng, K);
    const std::size_t i2 = (i1 + 1 + uniform_index(stats_rng, K - 1)) % K;
    between += sq_distance(ds.images[ds.index_of(i1, uniform_index(stats_rng, M))],
                           ds.images[ds.index_of(i2, uniform_index(stats_rng, M))]);
  }
  ds.mean_within_distance = within / kStatPairs;
  ds.mean_between_distance = between / kStatPairs;
  ds.separable = ds.mean_within_distance < ds.mean_between_distance;
  ds.degenerate = params.noise == 0.0 && params.jitter == 0.0 && params.max_shift == 0;
  return ds;
}

std::string_view to_string(Polarity p) {
  return p == Polarity::Negative ? "negative" : "positive";
}

Polarity parse_polarity(std::string_view text) {
  if (text == "negative") return Polarity::Negative;
  if (text == "positive") return Polarity::Positive;
  fail(ErrorKind::Config, "unknown polarity '" + std::string(text) + "'");
}

std::vector<FacePair> sample_pairs(const IdentityDataset& ds, std::size_t n_pairs, Polarity polarity,
                                   std::uint64_t seed, PairPool pool) {
  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (pool == PairPool::All || ds.is_holdout(i)) candidates.push_back(i);
  }
  std::vector<std::pair<std::size_t, std::size_t>> eligible;
  for (auto a : candidates) {
    for (auto b : candidates) {
      if (a == b) continue;
      const bool same = ds.labels[a] == ds.labels[b];
      if (same == (polarity == Polarity::Positive)) eligible.emplace_back(a, b);
    }
  }
  if (n_pairs == 0) return {};
  if (eligible.size() < n_pairs) {
    fail(ErrorKind::Precondition, "cannot sample " + std::to_string(n_pairs) + " " +
                                      std::string(to_string(polarity)) + " pairs; only " +
                                      std::to_string(eligible.size()) + " exist");
  }
  // Partial Fisher-Yates.
  Rng rng = make_rng(derive_seed(seed, "pairs"));
  std::vector<FacePair> out;
  out.reserve(n_pairs);
  for (std::size_t k = 0; k < n_pairs; ++k) {
    const std::size_t j = k + uniform_index(rng, eligible.size() - k);
    std::swap(eligible[k], eligible[j]);
    const auto [a, b] = eligible[k];
    out.push_back({a, b, ds.labels[a], ds.labels[b], polarity});
  }
  return out;
}

void save_images(const ImageContainer& c, const std::filesystem::path& path) {
  if (c.labels.size() != c.images.size()) fail(ErrorKind::Precondition, "one label per image required");
  BinaryWriter w(path);
  w.bytes(kMagic, sizeof kMagic);
  w.u32(kContainerVersion);
  w.string(c.header_json);
  w.u64(c.images.size());
  for (std::size_t i = 0; i < c.images.size(); ++i) {
    w.u64(c.labels[i]);
    w.string(json(c.images[i].shape()).dump());
    w.doubles(c.images[i].data());
  }
  w.close();
}

ImageContainer load_images(const std::filesystem::path& path) {
  BinaryReader r(path);
  char magic[8];
  r.bytes(magic, sizeof magic);
  if (std::memcmp(magic, kMagic, sizeof magic) != 0) fail(ErrorKind::Format, "not an image container: " + path.string());
  if (const auto v = r.u32(); v != kContainerVersion) {
    fail(ErrorKind::Format, "unsupported container version " + std::to_string(v));
  }
  ImageContainer c;
  c.header_json = r.string();
  const std::uint64_t n = r.u64();
  try {
    for (std::uint64_t i = 0; i < n; ++i) {
      c.labels.push_back(r.u64());
      Shape shape = json::parse(r.string()).get<Shape>();
      c.images.emplace_back(std::move(shape), r.doubles());
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::Format, std::string("corrupt image container: ") + e.what());
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::Shape) fail(ErrorKind::Format, e.what());
    throw;
  }
  r.expect_end();
  return c;
}

namespace {

json params_json(const DatasetParams& p) {
  return {{"num_identities", p.num_identities},
          {"images_per_identity", p.images_per_identity},
          {"height", p.height},
          {"width", p.width},
          {"seed", p.seed},
          {"prototype_frequencies", p.prototype_frequencies},
          {"prototype_amplitude", p.prototype_amplitude},
          {"jitter_frequencies", p.jitter_frequencies},
          {"jitter", p.jitter},
          {"max_shift", p.max_shift},
          {"noise", p.noise},
          {"holdout_per_identity", p.holdout_per_identity}};
}

DatasetParams params_from_json(const json& j) {
  DatasetParams p;
  p.num_identities = j.at("num_identities");
  p.images_per_identity = j.at("images_per_identity");
  p.height = j.at("height");
  p.width = j.at("width");
  p.seed = j.at("seed");
  p.prototype_frequencies = j.at("prototype_frequencies");
  p.prototype_amplitude = j.at("prototype_amplitude");
  p.jitter_frequencies = j.at("jitter_frequencies");
  p.jitter = j.at("jitter");
  p.max_shift = j.at("max_shift");
  p.noise = j.at("noise");
  p.holdout_per_identity = j.at("holdout_per_identity");
  return p;
}

}  // namespace

void save_dataset(const IdentityDataset& ds, const std::filesystem::path& path) {
  ImageContainer c;
  json header;
  header["kind"] = "identity-dataset";
  header["params"] = params_json(ds.params);
  header["statistics"] = {{"mean_within_distance", ds.mean_within_distance},
                          {"mean_between_distance", ds.mean_between_distance},
                          {"separable", ds.separable},
                          {"degenerate", ds.degenerate}};
  c.header_json = header.dump();
  c.images = ds.images;
  c.labels = ds.labels;
  save_images(c, path);
}

IdentityDataset load_dataset(const std::filesystem::path& path) {
  ImageContainer c = load_images(path);
  IdentityDataset ds;
  try {
    const json header = json::parse(c.header_json);
    if (header.value("kind", "") != "identity-dataset") {
      fail(ErrorKind::Format, "container does not hold an identity dataset");
    }
    ds.params = params_from_json(header.at("params"));
    const auto& st = header.at("statistics");
    ds.mean_within_distance = st.at("mean_within_distance");
    ds.mean_between_distance = st.at("mean_between_distance");
    ds.separable = st.at("separable");
    ds.degenerate = st.at("degenerate");
  } catch (const json::exception& e) {
    fail(ErrorKind::Format, std::string("bad dataset header: ") + e.what());
  }
  if (c.images.size() != ds.params.num_identities * ds.params.images_per_identity) {
    fail(ErrorKind::Format, "dataset image count disagrees with its header");
  }
  for (std::size_t i = 0; i < c.images.size(); ++i) {
    if (c.images[i].shape() != ds.image_shape() || c.labels[i] != i / ds.params.images_per_identity) {
      fail(ErrorKind::Format, "dataset image " + std::to_string(i) + " disagrees with its header");
    }
  }
  ds.images = std::move(c.images);
  ds.labels = std::move(c.labels);
  return ds;
}

void save_pairs(const std::vector<FacePair>& pairs, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::Io, "cannot open for writing: " + path.string());
  out << "attacker_idx,target_idx,polarity\n";
  for (const auto& p : pairs) {
    out << p.attacker_index << ',' << p.target_index << ',' << to_string(p.polarity) << '\n';
  }
  if (!out) fail(ErrorKind::Io, "write failed: " + path.string());
}

std::vector<FacePair> load_pairs(const IdentityDataset& ds, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open for reading: " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "attacker_idx,target_idx,polarity") {
    fail(ErrorKind::Format, "bad pair list header in " + path.string());
  }
  std::vector<FacePair> pairs;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string a, b, pol;
    if (!std::getline(ss, a, ',') || !std::getline(ss, b, ',') || !std::getline(ss, pol)) {
      fail(ErrorKind::Format, "bad pair line: " + line);
    }
    FacePair p;
    try {
      p.attacker_index = std::stoul(a);
      p.target_index = std::stoul(b);
    } catch (const std::exception&) {
      fail(ErrorKind::Format, "bad pair line: " + line);
    }
    if (p.attacker_index >= ds.size() || p.target_index >= ds.size()) {
      fail(ErrorKind::Format, "pair index out of range: " + line);
    }
    p.attacker_id = ds.labels[p.attacker_index];
    p.target_id = ds.labels[p.target_index];
    p.polarity = parse_polarity(pol);
    if ((p.polarity == Polarity::Negative) != (p.attacker_id != p.target_id)) {
      fail(ErrorKind::Format, "pair polarity disagrees with identities: " + line);
    }
    pairs.push_back(p);
  }
  return pairs;
}

}  // namespace bpfa
