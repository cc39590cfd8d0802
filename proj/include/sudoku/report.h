#ifndef SUDOKU_REPORT_H_
#define SUDOKU_REPORT_H_

#include <iosfwd>
#include <string>
#include <string_view>

#include "sudoku/pipeline.h"

namespace sudoku {

inline constexpr int kReportSchemaVersion = 1;

// JSON document with a trailing newline. Key order is fixed, so equal
// inputs give byte-identical text.
std::string ReportToJson(const RecoveredMapping& result);

// One line per function: mask,label,recovered_by,labeled_by,confidence,
// followed by row and column lines.
void WriteReportCsv(const RecoveredMapping& result, std::ostream& out);

// Parses a report written by ReportToJson. Throws ParseError on malformed
// documents or an unknown schema version; the injectivity section is
// recomputed from the parsed mapping.
RecoveredMapping ParseReport(std::string_view json);
RecoveredMapping LoadReportFile(const std::string& path);

}  // namespace sudoku

#endif  // SUDOKU_REPORT_H_
