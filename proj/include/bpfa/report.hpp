#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "bpfa/harness.hpp"

namespace bpfa {

enum class ReportFormat { Csv, Json, Markdown };

std::string_view to_string(ReportFormat format);
ReportFormat parse_report_format(std::string_view text);

/// Columns: surrogate,victim,attack,mode,asr,n_pairs,threshold,is_whitebox.
std::string render_csv(const EvalReport& report);
std::string render_json(const EvalReport& report);

/// One table per mode. Rows are surrogates, columns victims. An attack "X"
/// that has a companion "X+BPFA" is rendered as "a / b" (percent), with b in
/// bold when it beats a; white-box cells carry a trailing '*'.
std::string render_markdown(const EvalReport& report);

std::string render_report(const EvalReport& report, ReportFormat format);
void write_report(const EvalReport& report, ReportFormat format, const std::filesystem::path& path);

EvalReport parse_report_csv(std::string_view text);
EvalReport load_report_csv(const std::filesystem::path& path);

}  // namespace bpfa
