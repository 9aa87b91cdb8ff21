#include "sdnguard/textio.hpp"

#include <charconv>
#include <cmath>

#include "sdnguard/error.hpp"

namespace sdnguard {

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) return "nan";
  return std::string(buf, ptr);
}

std::optional<double> parse_double(std::string_view s) {
  s = trim_view(s);
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  double out = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return out;
}

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    auto pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

std::string_view trim_view(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::ofstream open_output(const std::filesystem::path& path, std::string_view module) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  std::ofstream out(path);
  if (!out) fail(ErrorKind::Io, module, "cannot write " + path.string());
  return out;
}

std::ifstream open_input(const std::filesystem::path& path, std::string_view module) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, module, "cannot read " + path.string());
  return in;
}

void write_preamble(std::ostream& out, std::span<const std::string> preamble) {
  for (const auto& line : preamble) out << "# " << line << '\n';
}

}  // namespace sdnguard
