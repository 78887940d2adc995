#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>

#include "fedspectre/data.hpp"

namespace fedspectre::data {

/**
 * Renaming applied to a foreign CSV before schema validation, so public
 * datasets with their own column names and label spellings can be loaded
 * without editing the file. Loaded from a small JSON document:
 *
 *   {
 *     "columns":   {"their_device_col": "device", ...},
 *     "devices":   {"raspberrypi3": "RPi3", ...},
 *     "behaviors": {"Normal_v1": "normal", ...}
 *   }
 *
 * All three maps are optional; unmapped names pass through unchanged.
 */
struct ColumnMap {
  std::map<std::string, std::string> columns;
  std::map<std::string, std::string> devices;
  std::map<std::string, std::string> behaviors;

  static ColumnMap from_json_text(const std::string& text);
  static ColumnMap from_json_file(const std::filesystem::path& path);
};

/**
 * Loads a fingerprint CSV with header device,behavior,timestamp,e0..eN.
 * The feature width is taken from the header and must be constant; any
 * malformed cell throws ParseError naming the 1-based row.
 */
RecordList load_csv(const std::filesystem::path& path);
RecordList load_csv(const std::filesystem::path& path, const ColumnMap& map);

// Writes records in the same schema; doubles are printed round-trip exact.
void write_csv(const std::filesystem::path& path, const RecordList& records);

}  // namespace fedspectre::data
