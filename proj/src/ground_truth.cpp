// SPDX-License-Identifier: Apache-2.0
#include "pseudobound/ground_truth.hpp"

#include <cctype>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <regex>
#include <sstream>

#include "pseudobound/error.hpp"

namespace pseudobound {

namespace fs = std::filesystem;

FrameLabels read_labels(const fs::path &path) {
  std::ifstream in(path);
  if (!in)
    throw EvalError("cannot read labels " + path.string());
  FrameLabels labels;
  std::string token;
  char c;
  auto flush = [&] {
    if (token.empty())
      return;
    if (token == "0" || token == "1")
      labels.push_back(static_cast<std::uint8_t>(token[0] - '0'));
    else
      throw EvalError("non-binary label '" + token + "' in " + path.string());
    token.clear();
  };
  while (in.get(c)) {
    if (std::isspace(static_cast<unsigned char>(c)) || c == ',')
      flush();
    else
      token.push_back(c);
  }
  flush();
  return labels;
}

void write_labels(const fs::path &path, const FrameLabels &labels) {
  if (path.has_parent_path())
    fs::create_directories(path.parent_path());
  std::ofstream out(path);
  for (std::size_t i = 0; i < labels.size(); ++i)
    out << int(labels[i]) << (i + 1 == labels.size() ? '\n' : ' ');
  if (!out)
    throw Error("cannot write labels " + path.string());
}

GroundTruth read_ground_truth(const fs::path &dir) {
  if (!fs::is_directory(dir))
    throw EvalError("ground-truth directory not found: " + dir.string());
  GroundTruth gt;
  for (const auto &e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".txt")
      gt[e.path().stem().string()] = read_labels(e.path());
  if (gt.empty())
    throw EvalError("no label files in " + dir.string());
  return gt;
}

void write_ground_truth(const fs::path &dir, const GroundTruth &gt) {
  for (const auto &[id, labels] : gt)
    write_labels(dir / (id + ".txt"), labels);
}

FrameLabels labels_from_ranges(const std::vector<std::pair<std::size_t, std::size_t>> &ranges,
                               std::size_t length) {
  FrameLabels labels(length, 0);
  for (const auto &[first, last] : ranges) {
    if (first < 1 || last < first || last > length)
      throw EvalError("anomaly range [" + std::to_string(first) + ", " +
                      std::to_string(last) + "] outside video of length " +
                      std::to_string(length));
    for (std::size_t i = first; i <= last; ++i)
      labels[i - 1] = 1;
  }
  return labels;
}

GroundTruth parse_ucsd_annotation(const fs::path &m_file,
                                  const std::map<std::string, std::size_t> &lengths) {
  std::ifstream in(m_file);
  if (!in)
    throw EvalError("cannot read annotation " + m_file.string());
  const std::regex line_re(R"(TestVideoFile\{(\d+)\}\.gt_frame\s*=\s*\[([^\]]*)\])");
  const std::regex range_re(R"((\d+)\s*:\s*(\d+))");
  GroundTruth gt;
  std::string line;
  while (std::getline(in, line)) {
    std::smatch m;
    if (!std::regex_search(line, m, line_re))
      continue;
    std::ostringstream id;
    id << "Test" << std::setw(3) << std::setfill('0') << std::stoi(m[1].str());
    const auto len = lengths.find(id.str());
    if (len == lengths.end())
      throw EvalError("annotation mentions unknown video " + id.str());
    std::vector<std::pair<std::size_t, std::size_t>> ranges;
    const std::string body = m[2].str();
    for (std::sregex_iterator it(body.begin(), body.end(), range_re), end; it != end; ++it)
      ranges.emplace_back(std::stoul((*it)[1].str()), std::stoul((*it)[2].str()));
    gt[id.str()] = labels_from_ranges(ranges, len->second);
  }
  return gt;
}

FrameLabels read_npy_labels(const fs::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw EvalError("cannot read " + path.string());
  char magic[6];
  in.read(magic, 6);
  if (!in || std::memcmp(magic, "\x93NUMPY", 6) != 0)
    throw EvalError("not a .npy file: " + path.string());
  unsigned char version[2];
  in.read(reinterpret_cast<char *>(version), 2);
  std::size_t header_len = 0;
  if (version[0] == 1) {
    unsigned char b[2];
    in.read(reinterpret_cast<char *>(b), 2);
    header_len = b[0] | (std::size_t(b[1]) << 8);
  } else {
    unsigned char b[4];
    in.read(reinterpret_cast<char *>(b), 4);
    header_len = b[0] | (std::size_t(b[1]) << 8) | (std::size_t(b[2]) << 16) |
                 (std::size_t(b[3]) << 24);
  }
  std::string header(header_len, '\0');
  in.read(header.data(), static_cast<std::streamsize>(header_len));
  if (!in)
    throw EvalError("truncated .npy header: " + path.string());

  std::smatch m;
  if (!std::regex_search(header, m, std::regex(R"('descr'\s*:\s*'([<>|=]?)(\w)(\d+)')")))
    throw EvalError("unsupported .npy dtype in " + path.string());
  const char kind = m[2].str()[0];
  const std::size_t width = std::stoul(m[3].str());
  if (m[1].str() == ">" && width > 1)
    throw EvalError("big-endian .npy arrays are not supported: " + path.string());
  if (header.find("'fortran_order': True") != std::string::npos)
    throw EvalError("fortran-ordered .npy arrays are not supported");
  std::smatch s;
  if (!std::regex_search(header, s, std::regex(R"('shape'\s*:\s*\((\d+),?\s*\))")))
    throw EvalError("expected a 1-D .npy array in " + path.string());
  const std::size_t n = std::stoul(s[1].str());

  std::vector<char> raw(n * width);
  in.read(raw.data(), static_cast<std::streamsize>(raw.size()));
  if (!in)
    throw EvalError("truncated .npy data: " + path.string());
  FrameLabels labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    const char *p = raw.data() + i * width;
    double v = 0.0;
    if (kind == 'b' || kind == 'u') {
      std::uint64_t u = 0;
      std::memcpy(&u, p, width);
      v = double(u);
    } else if (kind == 'i') {
      if (width == 4) {
        std::int32_t x;
        std::memcpy(&x, p, 4);
        v = x;
      } else if (width == 8) {
        std::int64_t x;
        std::memcpy(&x, p, 8);
        v = double(x);
      } else if (width == 2) {
        std::int16_t x;
        std::memcpy(&x, p, 2);
        v = x;
      } else {
        v = static_cast<signed char>(*p);
      }
    } else if (kind == 'f' && width == 4) {
      float x;
      std::memcpy(&x, p, 4);
      v = x;
    } else if (kind == 'f' && width == 8) {
      std::memcpy(&v, p, 8);
    } else {
      throw EvalError("unsupported .npy dtype in " + path.string());
    }
    if (v != 0.0 && v != 1.0)
      throw EvalError("non-binary value in " + path.string());
    labels[i] = static_cast<std::uint8_t>(v);
  }
  return labels;
}

GroundTruth load_ground_truth(const fs::path &path,
                              const std::map<std::string, std::size_t> &lengths) {
  if (fs::is_regular_file(path)) {
    if (path.extension() == ".m")
      return parse_ucsd_annotation(path, lengths);
    if (path.extension() == ".npy" && lengths.size() == 1)
      return {{lengths.begin()->first, read_npy_labels(path)}};
    throw EvalError("unsupported ground-truth file " + path.string());
  }
  if (!fs::is_directory(path))
    throw EvalError("ground truth not found: " + path.string());
  GroundTruth npy;
  for (const auto &e : fs::directory_iterator(path))
    if (e.is_regular_file() && e.path().extension() == ".npy")
      npy[e.path().stem().string()] = read_npy_labels(e.path());
  if (!npy.empty())
    return npy;
  return read_ground_truth(path);
}

} // namespace pseudobound
