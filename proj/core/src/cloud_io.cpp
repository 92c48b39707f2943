#include "fmr/cloud_io.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <vector>

#include "fmr/errors.hpp"

namespace fmr {

namespace fs = std::filesystem;

void atomic_write(const fs::path& path,
                  const std::function<void(std::ostream&)>& write) {
  fs::path dir = path.parent_path();
  if (dir.empty()) dir = ".";
  const fs::path tmp = dir / (path.filename().string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + tmp.string());
    write(out);
    out.flush();
    if (!out) {
      std::error_code ec;
      fs::remove(tmp, ec);
      throw IoError("write failed: " + tmp.string());
    }
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw IoError("rename failed for " + path.string());
  }
}

CloudFormat format_from_path(const fs::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  if (ext == ".xyz") return CloudFormat::Xyz;
  if (ext == ".ply") return CloudFormat::Ply;
  if (ext == ".off") return CloudFormat::Off;
  throw InvalidArgument("unrecognized point cloud extension: " +
                        path.string());
}

namespace {

std::string fmt_coord(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

// Splits on runs of spaces/tabs; CR from CRLF input is stripped by callers.
std::vector<std::string> split_ws(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream is(line);
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

double parse_double(const std::string& tok, int line_no) {
  double v = 0.0;
  const auto [ptr, ec] =
      std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc{} || ptr != tok.data() + tok.size()) {
    throw ParseError(line_no, "not a number: '" + tok + "'");
  }
  return v;
}

std::string chomp(std::string line) {
  while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) {
    line.pop_back();
  }
  return line;
}

PointCloud load_xyz(std::ifstream& in) {
  PointCloud cloud;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = chomp(line);
    if (line.empty() || line[0] == '#') continue;
    const auto toks = split_ws(line);
    if (toks.size() != 3) {
      throw ParseError(line_no, "expected 3 coordinates, got " +
                                    std::to_string(toks.size()));
    }
    cloud.points.emplace_back(parse_double(toks[0], line_no),
                              parse_double(toks[1], line_no),
                              parse_double(toks[2], line_no));
  }
  if (cloud.empty()) throw ParseError(line_no, "no points in file");
  return cloud;
}

PointCloud load_ply(std::ifstream& in) {
  std::string line;
  int line_no = 0;

  auto next_line = [&]() -> std::string {
    if (!std::getline(in, line)) {
      throw ParseError(line_no, "unexpected end of file");
    }
    ++line_no;
    return chomp(line);
  };

  if (next_line() != "ply") throw ParseError(line_no, "missing 'ply' magic");
  if (next_line() != "format ascii 1.0") {
    throw UnsupportedElement("only 'format ascii 1.0' PLY is supported");
  }

  // Header: remember each element's row count; vertex must carry exactly
  // the properties x, y, z of a float type.
  struct Element {
    std::string name;
    long count = 0;
    std::vector<std::string> properties;
  };
  std::vector<Element> elements;
  while (true) {
    const std::string l = next_line();
    const auto toks = split_ws(l);
    if (toks.empty()) continue;
    if (toks[0] == "comment") continue;
    if (toks[0] == "end_header") break;
    if (toks[0] == "element") {
      if (toks.size() != 3) throw ParseError(line_no, "malformed element");
      elements.push_back(
          {toks[1], static_cast<long>(parse_double(toks[2], line_no)), {}});
    } else if (toks[0] == "property") {
      if (elements.empty()) {
        throw ParseError(line_no, "property before any element");
      }
      if (toks.size() < 3) throw ParseError(line_no, "malformed property");
      if (elements.back().name == "vertex") {
        const std::string& type = toks[1];
        if (type != "float" && type != "float32" && type != "double" &&
            type != "float64") {
          throw UnsupportedElement("vertex property type '" + type +
                                   "' not supported");
        }
        elements.back().properties.push_back(toks.back());
      }
    } else {
      throw ParseError(line_no, "unknown header keyword: " + toks[0]);
    }
  }

  const auto vertex = std::find_if(elements.begin(), elements.end(),
                                   [](const Element& e) {
                                     return e.name == "vertex";
                                   });
  if (vertex == elements.end()) {
    throw ParseError(line_no, "no vertex element in header");
  }
  if (vertex->properties != std::vector<std::string>{"x", "y", "z"}) {
    throw UnsupportedElement(
        "vertex element must have exactly properties x, y, z");
  }
  if (vertex->count < 1) throw ParseError(line_no, "vertex count must be >=1");

  PointCloud cloud;
  for (const auto& elem : elements) {
    for (long i = 0; i < elem.count; ++i) {
      const std::string l = next_line();
      if (elem.name != "vertex") continue;  // faces etc. are skipped
      const auto toks = split_ws(l);
      if (toks.size() != 3) {
        throw ParseError(line_no, "expected 3 vertex coordinates");
      }
      cloud.points.emplace_back(parse_double(toks[0], line_no),
                                parse_double(toks[1], line_no),
                                parse_double(toks[2], line_no));
    }
  }
  return cloud;
}

PointCloud load_off(std::ifstream& in) {
  std::string line;
  int line_no = 0;
  auto next_content_line = [&]() -> std::string {
    while (std::getline(in, line)) {
      ++line_no;
      line = chomp(line);
      if (!line.empty() && line[0] != '#') return line;
    }
    throw ParseError(line_no, "unexpected end of file");
  };

  std::string magic = next_content_line();
  long nv = -1, nf = 0;
  if (magic == "OFF") {
    const auto counts = split_ws(next_content_line());
    if (counts.size() < 2) throw ParseError(line_no, "malformed counts line");
    nv = static_cast<long>(parse_double(counts[0], line_no));
    nf = static_cast<long>(parse_double(counts[1], line_no));
  } else if (magic.rfind("OFF", 0) == 0) {
    // Counts on the magic line ("OFF 8 6 12" variant).
    const auto toks = split_ws(magic.substr(3));
    if (toks.size() < 2) throw ParseError(line_no, "malformed counts");
    nv = static_cast<long>(parse_double(toks[0], line_no));
    nf = static_cast<long>(parse_double(toks[1], line_no));
  } else {
    throw ParseError(line_no, "missing OFF magic");
  }
  if (nv < 1) throw ParseError(line_no, "vertex count must be >= 1");

  PointCloud cloud;
  cloud.points.reserve(nv);
  for (long i = 0; i < nv; ++i) {
    const auto toks = split_ws(next_content_line());
    if (toks.size() < 3) throw ParseError(line_no, "expected 3 coordinates");
    cloud.points.emplace_back(parse_double(toks[0], line_no),
                              parse_double(toks[1], line_no),
                              parse_double(toks[2], line_no));
  }
  (void)nf;  // face lines are ignored
  return cloud;
}

}  // namespace

PointCloud load_cloud(const fs::path& path, CloudFormat format) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path.string());
  switch (format) {
    case CloudFormat::Xyz: return load_xyz(in);
    case CloudFormat::Ply: return load_ply(in);
    case CloudFormat::Off: return load_off(in);
  }
  throw InvalidArgument("bad format");
}

PointCloud load_cloud(const fs::path& path) {
  return load_cloud(path, format_from_path(path));
}

void save_cloud(const PointCloud& cloud, const fs::path& path,
                CloudFormat format) {
  if (cloud.empty()) throw InvalidArgument("refusing to save an empty cloud");
  atomic_write(path, [&](std::ostream& out) {
    switch (format) {
      case CloudFormat::Xyz:
        for (const auto& p : cloud.points) {
          out << fmt_coord(p.x()) << ' ' << fmt_coord(p.y()) << ' '
              << fmt_coord(p.z()) << '\n';
        }
        break;
      case CloudFormat::Ply:
        out << "ply\nformat ascii 1.0\nelement vertex " << cloud.size()
            << "\nproperty float64 x\nproperty float64 y\nproperty float64 z\n"
               "end_header\n";
        for (const auto& p : cloud.points) {
          out << fmt_coord(p.x()) << ' ' << fmt_coord(p.y()) << ' '
              << fmt_coord(p.z()) << '\n';
        }
        break;
      case CloudFormat::Off:
        out << "OFF\n" << cloud.size() << " 0 0\n";
        for (const auto& p : cloud.points) {
          out << fmt_coord(p.x()) << ' ' << fmt_coord(p.y()) << ' '
              << fmt_coord(p.z()) << '\n';
        }
        break;
    }
  });
}

void save_cloud(const PointCloud& cloud, const fs::path& path) {
  save_cloud(cloud, path, format_from_path(path));
}

}  // namespace fmr
