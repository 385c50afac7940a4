#pragma once

#include "elicit/graph.hpp"
#include "elicit/provider.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace elicit {

enum class IssueFlag { ProviderSuggested, UserWritten, UserValidated, UserDiscarded };

std::string_view to_string(IssueFlag flag);
std::optional<IssueFlag> parse_issue_flag(std::string_view text);

struct Issue {
  std::string text;
  IssueFlag flag = IssueFlag::ProviderSuggested;

  friend bool operator==(const Issue&, const Issue&) = default;
};

struct AssessmentRow {
  NodeId node;
  std::string data_action;
  std::vector<std::string> data;
  std::vector<std::string> specific_context;
  std::vector<Issue> summary_issues;
  /// Set when the provider could not suggest issues for this row.
  bool provider_warning = false;

  friend bool operator==(const AssessmentRow&, const AssessmentRow&) = default;
};

/// One row per data action in flow order. Data lists the data_type values of
/// the node and of every upstream node; specific context lists the node's other
/// decisions followed by its attached interactions and their decisions.
/// Provider failures leave the issue list empty with provider_warning set.
std::vector<AssessmentRow> build_assessment(const PrivacyGraph& graph, Provider& provider);

enum class Column { DataAction, Data, SpecificContext, SummaryIssues };

std::string_view to_string(Column column);
std::optional<Column> parse_column(std::string_view text);

inline constexpr std::array<std::string_view, 4> kAssessmentHeader = {"Data Action", "Data", "Specific Context",
                                                                      "Summary Issues"};
inline constexpr std::string_view kAssessmentSheetName = "Data Action Analysis";
inline constexpr std::string_view kCellSeparator = "; ";

namespace edit {
/// Replaces a Data Action (exactly one value), Data or Specific Context cell.
struct SetCell {
  std::size_t row = 0;
  Column column = Column::Data;
  std::vector<std::string> values;
  friend bool operator==(const SetCell&, const SetCell&) = default;
};
struct AddIssue {
  std::size_t row = 0;
  std::string text;
  friend bool operator==(const AddIssue&, const AddIssue&) = default;
};
/// Rewording an issue makes it user-written.
struct EditIssue {
  std::size_t row = 0;
  std::size_t issue = 0;
  std::string text;
  friend bool operator==(const EditIssue&, const EditIssue&) = default;
};
struct SetIssueFlag {
  std::size_t row = 0;
  std::size_t issue = 0;
  IssueFlag flag = IssueFlag::UserValidated;
  friend bool operator==(const SetIssueFlag&, const SetIssueFlag&) = default;
};
}  // namespace edit

using AssessmentEdit = std::variant<edit::SetCell, edit::AddIssue, edit::EditIssue, edit::SetIssueFlag>;

/// Throws Error{InvalidEdit}; `rows` is unchanged in that case.
void apply_edit(std::vector<AssessmentRow>& rows, const AssessmentEdit& e);

using CellRow = std::array<std::string, 4>;

/// Cell text per column; discarded issues are left out of the exported cell.
CellRow row_cells(const AssessmentRow& row);
std::vector<CellRow> table_cells(const std::vector<AssessmentRow>& rows);

/// RFC 4180: CRLF line ends, fields quoted when they hold a comma, quote,
/// CR or LF. The header row comes first.
std::string export_csv(const std::vector<AssessmentRow>& rows);
std::string export_csv_cells(const std::vector<CellRow>& rows);
/// Every record including the header. Throws Error{ParseError}.
std::vector<std::vector<std::string>> parse_csv(std::string_view text);

/// A single-sheet workbook with a bold header row and inline strings.
std::string export_xlsx(const std::vector<AssessmentRow>& rows);

enum class ExportFormat { Csv, Xlsx };
std::string_view to_string(ExportFormat format);
std::optional<ExportFormat> parse_export_format(std::string_view text);
std::string_view content_type(ExportFormat format);

nlohmann::json rows_to_json(const std::vector<AssessmentRow>& rows);
std::vector<AssessmentRow> rows_from_json(const nlohmann::json& j);
nlohmann::json edit_to_json(const AssessmentEdit& e);
AssessmentEdit edit_from_json(const nlohmann::json& j);

}  // namespace elicit
