#include "fedspectre/csv.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <string_view>

#include <json.hpp>

namespace fedspectre::data {
namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

std::string_view trim(std::string_view text) {
  while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) {
    text.remove_prefix(1);
  }
  while (!text.empty() &&
         (text.back() == ' ' || text.back() == '\t' || text.back() == '\r')) {
    text.remove_suffix(1);
  }
  return text;
}

std::vector<std::string_view> split_cells(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      cells.push_back(trim(line.substr(start)));
      return cells;
    }
    cells.push_back(trim(line.substr(start, comma - start)));
    start = comma + 1;
  }
}

std::string remap(const std::map<std::string, std::string>& map,
                  std::string_view name) {
  const auto it = map.find(std::string(name));
  return it == map.end() ? std::string(name) : it->second;
}

double parse_double(std::string_view cell, std::size_t row, std::size_t column) {
  double value = 0.0;
  const auto [end, ec] =
      std::from_chars(cell.data(), cell.data() + cell.size(), value);
  if (ec != std::errc{} || end != cell.data() + cell.size()) {
    throw ParseError("row " + std::to_string(row) + ": bad number '" +
                     std::string(cell) + "' in column " + std::to_string(column));
  }
  return value;
}

void parse_map(const nlohmann::json& doc, const char* key,
               std::map<std::string, std::string>& out) {
  if (!doc.contains(key)) return;
  const auto& section = doc.at(key);
  if (!section.is_object()) {
    throw ParseError(std::string("column map: '") + key + "' must be an object");
  }
  for (const auto& [from, to] : section.items()) {
    if (!to.is_string()) {
      throw ParseError(std::string("column map: '") + key + "." + from +
                       "' must be a string");
    }
    out[from] = to.get<std::string>();
  }
}

}  // namespace

ColumnMap ColumnMap::from_json_text(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("column map: ") + e.what());
  }
  if (!doc.is_object()) throw ParseError("column map: top level must be an object");
  ColumnMap map;
  parse_map(doc, "columns", map.columns);
  parse_map(doc, "devices", map.devices);
  parse_map(doc, "behaviors", map.behaviors);
  return map;
}

ColumnMap ColumnMap::from_json_file(const std::filesystem::path& path) {
  return from_json_text(read_file(path));
}

RecordList load_csv(const std::filesystem::path& path) {
  return load_csv(path, ColumnMap{});
}

RecordList load_csv(const std::filesystem::path& path, const ColumnMap& map) {
  const std::string text = read_file(path);

  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t nl = text.find('\n', start);
    if (nl == std::string::npos) {
      if (start < text.size()) lines.emplace_back(&text[start], text.size() - start);
      break;
    }
    lines.emplace_back(&text[start], nl - start);
    start = nl + 1;
  }
  if (lines.empty()) throw ParseError(path.string() + ": empty file");

  const auto header = split_cells(lines[0]);
  if (header.size() < 3) throw ParseError("row 1: header needs at least 3 columns");
  const char* expected[3] = {"device", "behavior", "timestamp"};
  for (int i = 0; i < 3; ++i) {
    if (remap(map.columns, header[i]) != expected[i]) {
      throw ParseError("row 1: column " + std::to_string(i + 1) + " is '" +
                       std::string(header[i]) + "', expected '" + expected[i] + "'");
    }
  }
  const std::size_t width = header.size() - 3;
  for (std::size_t j = 0; j < width; ++j) {
    const std::string want = "e" + std::to_string(j);
    if (remap(map.columns, header[3 + j]) != want) {
      throw ParseError("row 1: column " + std::to_string(4 + j) + " is '" +
                       std::string(header[3 + j]) + "', expected '" + want + "'");
    }
  }

  RecordList records;
  records.reserve(lines.size() - 1);
  for (std::size_t row = 2; row <= lines.size(); ++row) {
    const std::string_view line = trim(lines[row - 1]);
    if (line.empty()) continue;
    const auto cells = split_cells(line);
    if (cells.size() != 3 + width) {
      throw ParseError("row " + std::to_string(row) + ": expected " +
                       std::to_string(3 + width) + " cells, got " +
                       std::to_string(cells.size()));
    }
    FingerprintRecord record;
    try {
      record.device = device_from_string(remap(map.devices, cells[0]));
      record.behavior = behavior_from_string(remap(map.behaviors, cells[1]));
    } catch (const ParseError& e) {
      throw ParseError("row " + std::to_string(row) + ": " + e.what());
    }
    record.timestamp = parse_double(cells[2], row, 3);
    record.features.reserve(width);
    for (std::size_t j = 0; j < width; ++j) {
      record.features.push_back(parse_double(cells[3 + j], row, 4 + j));
    }
    records.push_back(std::move(record));
  }
  return records;
}

namespace {

void append_double(std::string& out, double value) {
  char buf[32];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  out.append(buf, end - buf);
  (void)ec;
}

}  // namespace

void write_csv(const std::filesystem::path& path, const RecordList& records) {
  const std::size_t width = records.empty() ? 0 : records[0].features.size();
  std::string out = "device,behavior,timestamp";
  for (std::size_t j = 0; j < width; ++j) {
    out += ",e" + std::to_string(j);
  }
  out += '\n';
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& record = records[i];
    if (record.features.size() != width) {
      throw ShapeError("record " + std::to_string(i) + " has " +
                       std::to_string(record.features.size()) +
                       " features, expected " + std::to_string(width));
    }
    out += to_string(record.device);
    out += ',';
    out += to_string(record.behavior);
    out += ',';
    append_double(out, record.timestamp);
    for (const double value : record.features) {
      out += ',';
      append_double(out, value);
    }
    out += '\n';
  }
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw IoError("cannot write " + path.string());
  file << out;
  if (!file) throw IoError("write failed for " + path.string());
}

}  // namespace fedspectre::data
