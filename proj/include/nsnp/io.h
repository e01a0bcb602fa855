#pragma once

#include <string>
#include <vector>

namespace nsnp {

// Throws ValidationError when the file cannot be opened.
std::vector<char> read_file(const std::string& path);

// Writes through a sibling temp file and a rename, so readers never see a
// partial file.
void write_file_atomic(const std::string& path, const std::vector<char>& bytes);
void write_file_atomic(const std::string& path, const std::string& text);

}  // namespace nsnp
