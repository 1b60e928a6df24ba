#include "bpfa/feature_dump.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "bpfa/error.hpp"

namespace bpfa {

void dump_feature_perturbation(const GradientBank& bank, std::size_t index, double eta,
                               const std::filesystem::path& path) {
  const auto it = bank.grads.find(index);
  if (it == bank.grads.end()) {
    fail(ErrorKind::Precondition, "no recorded gradient at layer " + std::to_string(index));
  }
  const Tensor perturbation = scale(sign(it->second), eta);
  const Shape& s = perturbation.shape();
  const std::size_t channels = s.size() == 3 ? s[0] : 1;
  const std::size_t rows = s.size() == 3 ? s[1] : 1;
  const std::size_t cols = s.size() == 3 ? s[2] : perturbation.size();

  std::ofstream out(path);
  if (!out) fail(ErrorKind::Io, "cannot open for writing: " + path.string());
  out.precision(17);
  out << "channel,row";
  for (std::size_t x = 0; x < cols; ++x) out << ",x" << x;
  out << '\n';
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t y = 0; y < rows; ++y) {
      out << c << ',' << y;
      for (std::size_t x = 0; x < cols; ++x) out << ',' << perturbation[(c * rows + y) * cols + x];
      out << '\n';
    }
  }
  if (!out) fail(ErrorKind::Io, "write failed: " + path.string());
}

Tensor load_feature_perturbation(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open for reading: " + path.string());
  std::string line;
  if (!std::getline(in, line) || line.rfind("channel,row", 0) != 0) {
    fail(ErrorKind::Format, "missing feature dump header");
  }
  std::vector<double> values;
  std::size_t channels = 0, rows = 0, cols = 0, lines = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    std::vector<double> fields;
    while (std::getline(ss, field, ',')) {
      double v = 0.0;
      auto [p, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
      if (ec != std::errc() || p != field.data() + field.size()) {
        fail(ErrorKind::Format, "bad number in feature dump: '" + field + "'");
      }
      fields.push_back(v);
    }
    if (fields.size() < 3) fail(ErrorKind::Format, "short feature dump line");
    const std::size_t row_cols = fields.size() - 2;
    if (cols == 0) cols = row_cols;
    if (row_cols != cols) fail(ErrorKind::Format, "ragged feature dump");
    channels = std::max(channels, static_cast<std::size_t>(fields[0]) + 1);
    rows = std::max(rows, static_cast<std::size_t>(fields[1]) + 1);
    values.insert(values.end(), fields.begin() + 2, fields.end());
    ++lines;
  }
  if (lines == 0 || lines != channels * rows) fail(ErrorKind::Format, "incomplete feature dump");
  return Tensor({channels, rows, cols}, std::move(values));
}

}  // namespace bpfa
