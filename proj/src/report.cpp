#include "bpfa/report.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "bpfa/error.hpp"

namespace bpfa {

namespace {

constexpr std::string_view kCsvHeader = "surrogate,victim,attack,mode,asr,n_pairs,threshold,is_whitebox";
constexpr std::string_view kBpfaSuffix = "+BPFA";

std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc{}) fail(ErrorKind::Format, "cannot format number");
  return std::string(buf, end);
}

void check_field(const std::string& s) {
  if (s.find_first_of(",\n\r\"") != std::string::npos) {
    fail(ErrorKind::Format, "report field contains a delimiter: '" + s + "'");
  }
}

std::vector<std::string> split(std::string_view line, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t pos = line.find(sep, start);
    out.emplace_back(line.substr(start, pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

double parse_double(const std::string& s) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) fail(ErrorKind::Format, "bad number '" + s + "'");
  return v;
}

std::size_t parse_size(const std::string& s) {
  std::size_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) fail(ErrorKind::Format, "bad count '" + s + "'");
  return v;
}

std::string percent(double asr) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(1) << 100.0 * asr;
  return os.str();
}

template <typename T>
void push_unique(std::vector<T>& v, const T& x) {
  if (std::find(v.begin(), v.end(), x) == v.end()) v.push_back(x);
}

}  // namespace

std::string_view to_string(ReportFormat format) {
  switch (format) {
    case ReportFormat::Csv: return "csv";
    case ReportFormat::Json: return "json";
    case ReportFormat::Markdown: return "markdown";
  }
  return "csv";
}

ReportFormat parse_report_format(std::string_view text) {
  if (text == "csv") return ReportFormat::Csv;
  if (text == "json") return ReportFormat::Json;
  if (text == "markdown" || text == "md" || text == "markdown-table") return ReportFormat::Markdown;
  fail(ErrorKind::Config, "unknown report format '" + std::string(text) + "'");
}

std::string render_csv(const EvalReport& report) {
  std::string out(kCsvHeader);
  out += '\n';
  for (const auto& r : report.rows) {
    check_field(r.surrogate);
    check_field(r.victim);
    check_field(r.attack);
    out += r.surrogate + ',' + r.victim + ',' + r.attack + ',' + std::string(to_string(r.mode)) + ',' +
           format_double(r.asr) + ',' + std::to_string(r.n_pairs) + ',' + format_double(r.threshold) + ',' +
           (r.is_whitebox ? "1" : "0") + '\n';
  }
  return out;
}

std::string render_json(const EvalReport& report) {
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (const auto& r : report.rows) {
    rows.push_back({{"surrogate", r.surrogate},
                    {"victim", r.victim},
                    {"attack", r.attack},
                    {"mode", std::string(to_string(r.mode))},
                    {"asr", r.asr},
                    {"n_pairs", r.n_pairs},
                    {"threshold", r.threshold},
                    {"is_whitebox", r.is_whitebox}});
  }
  nlohmann::ordered_json doc = {{"format", "bpfa-report"}, {"version", 1}, {"rows", rows}};
  return doc.dump(2) + "\n";
}

std::string render_markdown(const EvalReport& report) {
  std::vector<AttackMode> modes;
  for (const auto& r : report.rows) push_unique(modes, r.mode);

  std::ostringstream out;
  bool first_table = true;
  for (AttackMode mode : modes) {
    std::vector<std::string> surrogates, victims, attacks;
    std::map<std::tuple<std::string, std::string, std::string>, const EvalRow*> cell;
    for (const auto& r : report.rows) {
      if (r.mode != mode) continue;
      push_unique(surrogates, r.surrogate);
      push_unique(victims, r.victim);
      push_unique(attacks, r.attack);
      cell[{r.surrogate, r.victim, r.attack}] = &r;
    }
    // Columns of the table body: baselines paired with their +BPFA twin.
    std::vector<std::pair<std::string, std::string>> columns;
    std::set<std::string> paired;
    for (const auto& a : attacks) {
      if (a.ends_with(kBpfaSuffix)) continue;
      const std::string twin = a + std::string(kBpfaSuffix);
      if (std::find(attacks.begin(), attacks.end(), twin) != attacks.end()) {
        columns.emplace_back(a, twin);
        paired.insert(twin);
      } else {
        columns.emplace_back(a, "");
      }
    }
    for (const auto& a : attacks) {
      if (a.ends_with(kBpfaSuffix) && !paired.count(a)) columns.emplace_back(a, "");
    }

    if (!first_table) out << '\n';
    first_table = false;
    out << "### " << to_string(mode) << "\n\n| surrogate | attack |";
    for (const auto& v : victims) out << ' ' << v << " |";
    out << "\n|---|---|";
    for (std::size_t i = 0; i < victims.size(); ++i) out << "---|";
    out << '\n';
    for (const auto& s : surrogates) {
      for (const auto& [a, b] : columns) {
        out << "| " << s << " | " << (b.empty() ? a : a + " / " + b) << " |";
        for (const auto& v : victims) {
          const auto ia = cell.find({s, v, a});
          const EvalRow* ra = ia == cell.end() ? nullptr : ia->second;
          const EvalRow* rb = nullptr;
          if (!b.empty()) {
            const auto ib = cell.find({s, v, b});
            rb = ib == cell.end() ? nullptr : ib->second;
          }
          std::string text = ra ? percent(ra->asr) : "-";
          if (!b.empty()) {
            std::string tb = rb ? percent(rb->asr) : "-";
            if (ra && rb && rb->asr > ra->asr) tb = "**" + tb + "**";
            text += " / " + tb;
          }
          if (s == v) text += '*';
          out << ' ' << text << " |";
        }
        out << '\n';
      }
    }
  }
  return out.str();
}

std::string render_report(const EvalReport& report, ReportFormat format) {
  switch (format) {
    case ReportFormat::Csv: return render_csv(report);
    case ReportFormat::Json: return render_json(report);
    case ReportFormat::Markdown: return render_markdown(report);
  }
  fail(ErrorKind::Config, "unknown report format");
}

void write_report(const EvalReport& report, ReportFormat format, const std::filesystem::path& path) {
  const std::string text = render_report(report, format);
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::Io, "cannot open for writing: " + path.string());
  out << text;
  if (!out) fail(ErrorKind::Io, "write failed: " + path.string());
}

EvalReport parse_report_csv(std::string_view text) {
  EvalReport report;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    start = end + 1;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    ++line_no;
    if (line_no == 1) {
      if (line != kCsvHeader) fail(ErrorKind::Format, "unexpected report header");
      continue;
    }
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != 8) fail(ErrorKind::Format, "report line " + std::to_string(line_no) + " has wrong arity");
    EvalRow r;
    r.surrogate = f[0];
    r.victim = f[1];
    r.attack = f[2];
    r.mode = parse_attack_mode(f[3]);
    r.asr = parse_double(f[4]);
    r.n_pairs = parse_size(f[5]);
    r.threshold = parse_double(f[6]);
    if (f[7] != "0" && f[7] != "1") fail(ErrorKind::Format, "bad white-box flag '" + f[7] + "'");
    r.is_whitebox = f[7] == "1";
    if (!(r.asr >= 0.0 && r.asr <= 1.0)) fail(ErrorKind::Format, "ASR outside [0,1]");
    report.rows.push_back(std::move(r));
  }
  if (line_no == 0) fail(ErrorKind::Format, "empty report file");
  return report;
}

EvalReport load_report_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_report_csv(ss.str());
}

}  // namespace bpfa
