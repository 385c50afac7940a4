#include "elicit/assessment.hpp"

#include "elicit/error.hpp"
#include "json_util.hpp"

#include <algorithm>

namespace elicit {

using namespace detail;

namespace {

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

const DecisionKey& data_type_key() {
  static const DecisionKey k = DecisionKey::from_canonical("data_type");
  return k;
}

void push_unique(std::vector<std::string>& out, const std::string& v) {
  if (std::find(out.begin(), out.end(), v) == out.end()) out.push_back(v);
}

[[noreturn]] void invalid_edit(const std::string& message) { throw Error(ErrorCode::InvalidEdit, message); }

AssessmentRow& row_at(std::vector<AssessmentRow>& rows, std::size_t row) {
  if (row >= rows.size()) invalid_edit("no row " + std::to_string(row));
  return rows[row];
}

Issue& issue_at(AssessmentRow& row, std::size_t issue) {
  if (issue >= row.summary_issues.size()) invalid_edit("row has no issue " + std::to_string(issue));
  return row.summary_issues[issue];
}

}  // namespace

std::string_view to_string(IssueFlag flag) {
  switch (flag) {
    case IssueFlag::ProviderSuggested: return "provider-suggested";
    case IssueFlag::UserWritten: return "user-written";
    case IssueFlag::UserValidated: return "user-validated";
    case IssueFlag::UserDiscarded: return "user-discarded";
  }
  return "?";
}

std::optional<IssueFlag> parse_issue_flag(std::string_view text) {
  for (auto f : {IssueFlag::ProviderSuggested, IssueFlag::UserWritten, IssueFlag::UserValidated,
                 IssueFlag::UserDiscarded}) {
    if (to_string(f) == text) return f;
  }
  return std::nullopt;
}

std::string_view to_string(Column column) {
  switch (column) {
    case Column::DataAction: return "data_action";
    case Column::Data: return "data";
    case Column::SpecificContext: return "specific_context";
    case Column::SummaryIssues: return "summary_issues";
  }
  return "?";
}

std::optional<Column> parse_column(std::string_view text) {
  for (auto c : {Column::DataAction, Column::Data, Column::SpecificContext, Column::SummaryIssues}) {
    if (to_string(c) == text) return c;
  }
  return std::nullopt;
}

std::vector<AssessmentRow> build_assessment(const PrivacyGraph& graph, Provider& provider) {
  std::vector<AssessmentRow> rows;
  std::vector<std::string> upstream_data;
  for (const NodeId& id : graph.data_flow()) {
    const Node& node = graph.node(id);
    AssessmentRow row;
    row.node = id;
    row.data_action = node.label;
    row.data = upstream_data;
    for (const auto& [key, value] : node.decisions) {
      if (key == data_type_key()) {
        for (const auto& v : value.all_values()) {
          push_unique(row.data, v);
          push_unique(upstream_data, v);
        }
      } else {
        row.specific_context.push_back(key.str() + ": " + join(value.all_values(), ", "));
      }
    }
    for (const NodeId& iid : graph.attached_to(id)) {
      const Node& inter = graph.node(iid);
      row.specific_context.push_back(std::string(to_string(inter.kind)) + ": " + inter.label);
      for (const auto& [key, value] : inter.decisions) {
        row.specific_context.push_back(inter.label + " / " + key.str() + ": " + join(value.all_values(), ", "));
      }
    }
    try {
      for (auto& text : provider.summarize_issues(node, graph)) {
        row.summary_issues.push_back({std::move(text), IssueFlag::ProviderSuggested});
      }
    } catch (const Error&) {
      row.summary_issues.clear();
      row.provider_warning = true;
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

void apply_edit(std::vector<AssessmentRow>& rows, const AssessmentEdit& e) {
  std::visit(overloaded{
                 [&](const edit::SetCell& s) {
                   AssessmentRow& row = row_at(rows, s.row);
                   switch (s.column) {
                     case Column::DataAction:
                       if (s.values.size() != 1) invalid_edit("data_action takes exactly one value");
                       row.data_action = s.values.front();
                       break;
                     case Column::Data: row.data = s.values; break;
                     case Column::SpecificContext: row.specific_context = s.values; break;
                     case Column::SummaryIssues: invalid_edit("edit summary issues with issue operations");
                   }
                 },
                 [&](const edit::AddIssue& a) {
                   row_at(rows, a.row).summary_issues.push_back({a.text, IssueFlag::UserWritten});
                 },
                 [&](const edit::EditIssue& a) {
                   Issue& issue = issue_at(row_at(rows, a.row), a.issue);
                   issue.text = a.text;
                   issue.flag = IssueFlag::UserWritten;
                 },
                 [&](const edit::SetIssueFlag& a) {
                   Issue& issue = issue_at(row_at(rows, a.row), a.issue);
                   issue.flag = a.flag;
                 },
             },
             e);
}

CellRow row_cells(const AssessmentRow& row) {
  std::vector<std::string> issues;
  for (const auto& i : row.summary_issues) {
    if (i.flag != IssueFlag::UserDiscarded) issues.push_back(i.text);
  }
  return {row.data_action, join(row.data, kCellSeparator), join(row.specific_context, kCellSeparator),
          join(issues, kCellSeparator)};
}

std::vector<CellRow> table_cells(const std::vector<AssessmentRow>& rows) {
  std::vector<CellRow> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(row_cells(r));
  return out;
}

std::string_view to_string(ExportFormat format) { return format == ExportFormat::Csv ? "csv" : "xlsx"; }

std::optional<ExportFormat> parse_export_format(std::string_view text) {
  if (text == "csv") return ExportFormat::Csv;
  if (text == "xlsx") return ExportFormat::Xlsx;
  return std::nullopt;
}

std::string_view content_type(ExportFormat format) {
  return format == ExportFormat::Csv ? "text/csv; charset=utf-8"
                                     : "application/vnd.openxmlformats-officedocument.spreadsheetml.sheet";
}

// ---------------------------------------------------------------------------

json rows_to_json(const std::vector<AssessmentRow>& rows) {
  json out = json::array();
  for (const auto& r : rows) {
    json issues = json::array();
    for (const auto& i : r.summary_issues) issues.push_back({{"text", i.text}, {"flag", to_string(i.flag)}});
    json row = {{"node", r.node},
                {"data_action", r.data_action},
                {"data", r.data},
                {"specific_context", r.specific_context},
                {"summary_issues", issues}};
    if (r.provider_warning) row["provider_warning"] = true;
    out.push_back(std::move(row));
  }
  return out;
}

std::vector<AssessmentRow> rows_from_json(const json& j) {
  if (!j.is_array()) parse_fail("assessment rows must be an array");
  std::vector<AssessmentRow> rows;
  for (const auto& r : j) {
    AssessmentRow row;
    row.node = string_field(r, "node");
    row.data_action = string_field(r, "data_action");
    row.data = string_list(r, "data");
    row.specific_context = string_list(r, "specific_context");
    for (const auto& i : field(r, "summary_issues")) {
      auto flag = parse_issue_flag(string_field(i, "flag"));
      if (!flag) parse_fail("unknown issue flag");
      row.summary_issues.push_back({string_field(i, "text"), *flag});
    }
    row.provider_warning = r.value("provider_warning", false);
    rows.push_back(std::move(row));
  }
  return rows;
}

json edit_to_json(const AssessmentEdit& e) {
  return std::visit(
      overloaded{
          [](const edit::SetCell& s) -> json {
            return {{"op", "set_cell"}, {"row", s.row}, {"column", to_string(s.column)}, {"values", s.values}};
          },
          [](const edit::AddIssue& a) -> json { return {{"op", "add_issue"}, {"row", a.row}, {"text", a.text}}; },
          [](const edit::EditIssue& a) -> json {
            return {{"op", "edit_issue"}, {"row", a.row}, {"issue", a.issue}, {"text", a.text}};
          },
          [](const edit::SetIssueFlag& a) -> json {
            return {{"op", "set_issue_flag"}, {"row", a.row}, {"issue", a.issue}, {"flag", to_string(a.flag)}};
          },
      },
      e);
}

AssessmentEdit edit_from_json(const json& j) {
  auto index = [&](const char* name) -> std::size_t {
    const json& v = field(j, name);
    if (!v.is_number_integer() || v.get<long long>() < 0) parse_fail(std::string("'") + name + "' must be an index");
    return v.get<std::size_t>();
  };
  const std::string op = string_field(j, "op");
  if (op == "set_cell") {
    auto column = parse_column(string_field(j, "column"));
    if (!column) parse_fail("unknown column");
    return edit::SetCell{index("row"), *column, string_list(j, "values")};
  }
  if (op == "add_issue") return edit::AddIssue{index("row"), string_field(j, "text")};
  if (op == "edit_issue") return edit::EditIssue{index("row"), index("issue"), string_field(j, "text")};
  if (op == "set_issue_flag") {
    auto flag = parse_issue_flag(string_field(j, "flag"));
    if (!flag) parse_fail("unknown issue flag");
    return edit::SetIssueFlag{index("row"), index("issue"), *flag};
  }
  parse_fail("unknown edit op '" + op + "'");
}

}  // namespace elicit
