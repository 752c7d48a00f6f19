#include "gbm/hash.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

#include "gbm/errors.hpp"

namespace gbm {

std::string hash_bytes_hex(std::string_view bytes) {
  std::ostringstream out;
  out << "fnv1a64:" << std::hex << std::setfill('0') << std::setw(16) << fnv1a64(bytes);
  return out.str();
}

std::string hash_file_hex(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot hash missing file '" + path.string() + "'");
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return hash_bytes_hex(data);
}

}  // namespace gbm
