#pragma once

#include <iosfwd>
#include <string>

#include "optoent/click_record.hpp"

namespace optoent {

/// Line format: "# key = value" header lines, then "time<TAB>detector<TAB>color".
void write_clicks_text(std::ostream& os, const ClickRecord& rec);
ClickRecord read_clicks_text(std::istream& is);

/// Binary framing: magic "OPTOCLK1", u32 header length, header text, then
/// 9-byte frames of little-endian f64 time and u8 tag (detector << 1 | blue).
void write_clicks_binary(std::ostream& os, const ClickRecord& rec);
ClickRecord read_clicks_binary(std::istream& is);

/// Writes text or binary depending on `binary`.
void save_clicks(const std::string& path, const ClickRecord& rec, bool binary);
/// Reads either format, detected from the leading bytes.
ClickRecord load_clicks(const std::string& path);

}  // namespace optoent
