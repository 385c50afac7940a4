#include "elicit/assessment.hpp"
#include "elicit/error.hpp"

#include <zlib.h>

#include <cstdint>

namespace elicit {

namespace {

bool needs_quotes(const std::string& cell) { return cell.find_first_of(",\"\r\n") != std::string::npos; }

void append_csv_field(std::string& out, const std::string& cell) {
  if (!needs_quotes(cell)) {
    out += cell;
    return;
  }
  out += '"';
  for (char c : cell) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
}

void append_csv_record(std::string& out, const CellRow& cells) {
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) out += ',';
    append_csv_field(out, cells[i]);
  }
  out += "\r\n";
}

CellRow header_cells() {
  CellRow h;
  for (std::size_t i = 0; i < h.size(); ++i) h[i] = std::string(kAssessmentHeader[i]);
  return h;
}

// --- minimal zip container ---------------------------------------------------

void put16(std::string& out, std::uint16_t v) {
  out += static_cast<char>(v & 0xff);
  out += static_cast<char>(v >> 8);
}

void put32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out += static_cast<char>((v >> (8 * i)) & 0xff);
}

std::string raw_deflate(const std::string& data) {
  z_stream zs{};
  if (deflateInit2(&zs, Z_BEST_COMPRESSION, Z_DEFLATED, -15, 8, Z_DEFAULT_STRATEGY) != Z_OK) {
    throw Error(ErrorCode::InvalidArgument, "deflateInit2 failed");
  }
  std::string out(deflateBound(&zs, static_cast<uLong>(data.size())), '\0');
  zs.next_in = reinterpret_cast<Bytef*>(const_cast<char*>(data.data()));
  zs.avail_in = static_cast<uInt>(data.size());
  zs.next_out = reinterpret_cast<Bytef*>(out.data());
  zs.avail_out = static_cast<uInt>(out.size());
  int rc = deflate(&zs, Z_FINISH);
  deflateEnd(&zs);
  if (rc != Z_STREAM_END) throw Error(ErrorCode::InvalidArgument, "deflate failed");
  out.resize(zs.total_out);
  return out;
}

class ZipWriter {
 public:
  void add(const std::string& name, const std::string& data) {
    const std::uint32_t crc =
        static_cast<std::uint32_t>(crc32(0L, reinterpret_cast<const Bytef*>(data.data()), static_cast<uInt>(data.size())));
    const std::string packed = raw_deflate(data);
    const auto offset = static_cast<std::uint32_t>(body_.size());

    put32(body_, 0x04034b50);
    put_common(body_, crc, packed.size(), data.size(), name.size());
    put16(body_, 0);  // extra length
    body_ += name;
    body_ += packed;

    put32(central_, 0x02014b50);
    put16(central_, 20);  // version made by
    put_common(central_, crc, packed.size(), data.size(), name.size());
    put16(central_, 0);  // extra length
    put16(central_, 0);  // comment length
    put16(central_, 0);  // disk number
    put16(central_, 0);  // internal attributes
    put32(central_, 0);  // external attributes
    put32(central_, offset);
    central_ += name;
    ++entries_;
  }

  std::string finish() {
    std::string out = body_ + central_;
    put32(out, 0x06054b50);
    put16(out, 0);
    put16(out, 0);
    put16(out, entries_);
    put16(out, entries_);
    put32(out, static_cast<std::uint32_t>(central_.size()));
    put32(out, static_cast<std::uint32_t>(body_.size()));
    put16(out, 0);
    return out;
  }

 private:
  // Version needed, flags, method, fixed 1980-01-01 timestamp, sizes, name length.
  static void put_common(std::string& out, std::uint32_t crc, std::size_t packed, std::size_t size,
                         std::size_t name_len) {
    put16(out, 20);
    put16(out, 0);
    put16(out, 8);
    put16(out, 0);
    put16(out, 0x0021);
    put32(out, crc);
    put32(out, static_cast<std::uint32_t>(packed));
    put32(out, static_cast<std::uint32_t>(size));
    put16(out, static_cast<std::uint16_t>(name_len));
  }

  std::string body_;
  std::string central_;
  std::uint16_t entries_ = 0;
};

// --- spreadsheet parts --------------------------------------------------------

std::string xml_escape(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (char ch : s) {
    unsigned char c = static_cast<unsigned char>(ch);
    switch (ch) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default:
        // Control characters other than tab, LF and CR are not allowed in XML 1.0.
        if (c < 0x20 && ch != '\t' && ch != '\n' && ch != '\r') break;
        out += ch;
    }
  }
  return out;
}

constexpr const char* kXmlDecl = "<?xml version=\"1.0\" encoding=\"UTF-8\" standalone=\"yes\"?>\n";
constexpr const char* kMainNs = "http://schemas.openxmlformats.org/spreadsheetml/2006/main";
constexpr const char* kRelNs = "http://schemas.openxmlformats.org/officeDocument/2006/relationships";

std::string sheet_xml(const std::vector<CellRow>& rows) {
  std::string x = kXmlDecl;
  x += "<worksheet xmlns=\"";
  x += kMainNs;
  x += "\"><cols><col min=\"1\" max=\"1\" width=\"32\" customWidth=\"1\"/>"
       "<col min=\"2\" max=\"4\" width=\"48\" customWidth=\"1\"/></cols><sheetData>";
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const std::string rn = std::to_string(r + 1);
    x += "<row r=\"" + rn + "\">";
    for (std::size_t c = 0; c < rows[r].size(); ++c) {
      x += "<c r=\"";
      x += static_cast<char>('A' + c);
      x += rn + "\" t=\"inlineStr\"";
      if (r == 0) x += " s=\"1\"";
      x += "><is><t xml:space=\"preserve\">" + xml_escape(rows[r][c]) + "</t></is></c>";
    }
    x += "</row>";
  }
  x += "</sheetData></worksheet>";
  return x;
}

}  // namespace

std::string export_csv_cells(const std::vector<CellRow>& rows) {
  std::string out;
  append_csv_record(out, header_cells());
  for (const auto& r : rows) append_csv_record(out, r);
  return out;
}

std::string export_csv(const std::vector<AssessmentRow>& rows) { return export_csv_cells(table_cells(rows)); }

std::vector<std::vector<std::string>> parse_csv(std::string_view text) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string cell;
  std::size_t i = 0;
  bool at_record_start = true;
  while (i < text.size()) {
    at_record_start = false;
    if (text[i] == '"') {
      ++i;
      while (true) {
        if (i >= text.size()) throw Error(ErrorCode::ParseError, "unterminated quoted field");
        if (text[i] == '"') {
          if (i + 1 < text.size() && text[i + 1] == '"') {
            cell += '"';
            i += 2;
            continue;
          }
          ++i;
          break;
        }
        cell += text[i++];
      }
      if (i < text.size() && text[i] != ',' && text[i] != '\r' && text[i] != '\n') {
        throw Error(ErrorCode::ParseError, "garbage after closing quote");
      }
    } else {
      while (i < text.size() && text[i] != ',' && text[i] != '\r' && text[i] != '\n') {
        if (text[i] == '"') throw Error(ErrorCode::ParseError, "quote inside unquoted field");
        cell += text[i++];
      }
    }
    record.push_back(std::move(cell));
    cell.clear();
    if (i < text.size() && text[i] == ',') {
      ++i;
      if (i == text.size()) record.emplace_back();
      continue;
    }
    if (i < text.size() && text[i] == '\r') ++i;
    if (i < text.size() && text[i] == '\n') ++i;
    records.push_back(std::move(record));
    record.clear();
    at_record_start = true;
  }
  if (!at_record_start) records.push_back(std::move(record));
  return records;
}

std::string export_xlsx(const std::vector<AssessmentRow>& rows) {
  std::vector<CellRow> all;
  all.push_back(header_cells());
  for (auto& r : table_cells(rows)) all.push_back(std::move(r));

  ZipWriter zip;
  zip.add("[Content_Types].xml",
          std::string(kXmlDecl) +
              "<Types xmlns=\"http://schemas.openxmlformats.org/package/2006/content-types\">"
              "<Default Extension=\"rels\" ContentType=\"application/vnd.openxmlformats-package.relationships+xml\"/>"
              "<Default Extension=\"xml\" ContentType=\"application/xml\"/>"
              "<Override PartName=\"/xl/workbook.xml\" "
              "ContentType=\"application/vnd.openxmlformats-officedocument.spreadsheetml.sheet.main+xml\"/>"
              "<Override PartName=\"/xl/worksheets/sheet1.xml\" "
              "ContentType=\"application/vnd.openxmlformats-officedocument.spreadsheetml.worksheet+xml\"/>"
              "<Override PartName=\"/xl/styles.xml\" "
              "ContentType=\"application/vnd.openxmlformats-officedocument.spreadsheetml.styles+xml\"/>"
              "</Types>");
  zip.add("_rels/.rels",
          std::string(kXmlDecl) +
              "<Relationships xmlns=\"http://schemas.openxmlformats.org/package/2006/relationships\">"
              "<Relationship Id=\"rId1\" "
              "Type=\"http://schemas.openxmlformats.org/officeDocument/2006/relationships/officeDocument\" "
              "Target=\"xl/workbook.xml\"/></Relationships>");
  zip.add("xl/workbook.xml", std::string(kXmlDecl) + "<workbook xmlns=\"" + kMainNs + "\" xmlns:r=\"" + kRelNs +
                                 "\"><sheets><sheet name=\"" + std::string(kAssessmentSheetName) +
                                 "\" sheetId=\"1\" r:id=\"rId1\"/></sheets></workbook>");
  zip.add("xl/_rels/workbook.xml.rels",
          std::string(kXmlDecl) +
              "<Relationships xmlns=\"http://schemas.openxmlformats.org/package/2006/relationships\">"
              "<Relationship Id=\"rId1\" "
              "Type=\"http://schemas.openxmlformats.org/officeDocument/2006/relationships/worksheet\" "
              "Target=\"worksheets/sheet1.xml\"/>"
              "<Relationship Id=\"rId2\" "
              "Type=\"http://schemas.openxmlformats.org/officeDocument/2006/relationships/styles\" "
              "Target=\"styles.xml\"/></Relationships>");
  zip.add("xl/styles.xml",
          std::string(kXmlDecl) + "<styleSheet xmlns=\"" + kMainNs +
              "\"><fonts count=\"2\"><font><sz val=\"11\"/><name val=\"Calibri\"/></font>"
              "<font><b/><sz val=\"11\"/><name val=\"Calibri\"/></font></fonts>"
              "<fills count=\"1\"><fill><patternFill patternType=\"none\"/></fill></fills>"
              "<borders count=\"1\"><border><left/><right/><top/><bottom/><diagonal/></border></borders>"
              "<cellStyleXfs count=\"1\"><xf numFmtId=\"0\" fontId=\"0\" fillId=\"0\" borderId=\"0\"/></cellStyleXfs>"
              "<cellXfs count=\"2\"><xf numFmtId=\"0\" fontId=\"0\" fillId=\"0\" borderId=\"0\" xfId=\"0\">"
              "<alignment wrapText=\"1\" vertical=\"top\"/></xf>"
              "<xf numFmtId=\"0\" fontId=\"1\" fillId=\"0\" borderId=\"0\" xfId=\"0\" applyFont=\"1\"/></cellXfs>"
              "</styleSheet>");
  zip.add("xl/worksheets/sheet1.xml", sheet_xml(all));
  return zip.finish();
}

}  // namespace elicit
