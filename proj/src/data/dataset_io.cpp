#include "dcnet/dataset_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "dcnet/binary_io.hpp"
#include "dcnet/random.hpp"

namespace dcnet::data {

namespace {

using binary::FormatError;
constexpr std::string_view kMagic = "RPMD";

void write_attrs(binary::Writer& w, const rpm::AttributeVector& v) {
  w.u8(static_cast<std::uint8_t>(v.shape_type));
  w.u8(static_cast<std::uint8_t>(v.size_level));
  w.u8(static_cast<std::uint8_t>(v.fill_level));
  w.u8(static_cast<std::uint8_t>(v.count));
  w.u8(v.position_mask);
}

std::uint8_t checked(std::uint8_t v, int limit, const char* what, binary::Reader& r) {
  if (v >= limit) {
    throw FormatError(r.context() + ": invalid " + what + " value " + std::to_string(v) +
                      " at offset " + std::to_string(r.position() - 1));
  }
  return v;
}

rpm::AttributeVector read_attrs(binary::Reader& r) {
  rpm::AttributeVector v;
  v.shape_type = static_cast<rpm::ShapeType>(checked(r.u8(), rpm::kShapeTypeCount, "shape", r));
  v.size_level = r.u8();
  v.fill_level = r.u8();
  v.count = r.u8();
  v.position_mask = r.u8();
  const bool ok = v.size_level >= 1 && v.size_level <= 5 && v.fill_level >= 1 && v.fill_level <= 5 &&
                  v.count >= 1 && v.count <= 4 && v.count == rpm::popcount(v.position_mask);
  if (!ok) throw FormatError(r.context() + ": attribute values out of range in provenance block");
  return v;
}

void write_provenance(binary::Writer& w, const rpm::Provenance& p) {
  if (p.rules.rules.size() > 4) throw std::invalid_argument("provenance holds more than 4 rules");
  w.u8(static_cast<std::uint8_t>(p.rules.config));
  w.u8(static_cast<std::uint8_t>(p.rules.rules.size()));
  for (std::size_t i = 0; i < 4; ++i) {
    const rpm::Rule r = i < p.rules.rules.size() ? p.rules.rules[i] : rpm::Rule{};
    w.u8(static_cast<std::uint8_t>(r.attribute));
    w.u8(static_cast<std::uint8_t>(r.kind));
    w.u8(static_cast<std::uint8_t>(static_cast<std::int8_t>(r.step)));
    w.u8(static_cast<std::uint8_t>(static_cast<int>(r.arithmetic) | static_cast<int>(r.set_op) << 4));
  }
  for (const auto& v : p.matrix) write_attrs(w, v);
  for (const auto& v : p.choices) write_attrs(w, v);
  for (const auto& d : p.perturbations) {
    w.u8(d.is_answer ? 1 : 0);
    w.u8(static_cast<std::uint8_t>(d.attribute));
    w.u8(static_cast<std::uint8_t>(d.from));
    w.u8(static_cast<std::uint8_t>(d.to));
  }
}

rpm::Provenance read_provenance(binary::Reader& r) {
  rpm::Provenance p;
  p.rules.config = static_cast<rpm::Config>(checked(r.u8(), 2, "config", r));
  const std::uint8_t n = checked(r.u8(), 5, "rule count", r);
  for (std::size_t i = 0; i < 4; ++i) {
    rpm::Rule rule;
    rule.attribute = static_cast<rpm::Attribute>(checked(r.u8(), 5, "rule attribute", r));
    rule.kind = static_cast<rpm::RuleKind>(checked(r.u8(), 5, "rule kind", r));
    rule.step = static_cast<std::int8_t>(r.u8());
    const std::uint8_t ops = r.u8();
    rule.arithmetic = static_cast<rpm::ArithmeticOp>(ops & 0x0f);
    rule.set_op = static_cast<rpm::SetOp>(ops >> 4);
    if ((ops & 0x0f) > 1 || (ops >> 4) > 2) throw FormatError(r.context() + ": invalid rule operator");
    if (i < n) p.rules.rules.push_back(rule);
  }
  for (auto& v : p.matrix) v = read_attrs(r);
  for (auto& v : p.choices) v = read_attrs(r);
  for (auto& d : p.perturbations) {
    d.is_answer = checked(r.u8(), 2, "answer flag", r) == 1;
    d.attribute = static_cast<rpm::Attribute>(checked(r.u8(), 5, "perturbed attribute", r));
    d.from = r.u8();
    d.to = r.u8();
  }
  return p;
}

struct Header {
  std::uint64_t count = 0;
  std::size_t image_size = 0;
  SourceTag source = SourceTag::external;
  bool has_provenance = false;
};

Header read_header(binary::Reader& r) {
  if (r.remaining() < kMagic.size() || r.text(kMagic.size()) != kMagic)
    throw FormatError(r.context() + ": bad magic, expected RPMD");
  const std::uint32_t version = r.u32();
  if (version != kDatasetVersion) {
    throw FormatError(r.context() + ": version mismatch, file has " + std::to_string(version) +
                      ", reader supports " + std::to_string(kDatasetVersion));
  }
  Header h;
  h.count = r.u64();
  h.image_size = r.u32();
  h.source = static_cast<SourceTag>(checked(r.u8(), 4, "source tag", r));
  h.has_provenance = checked(r.u8(), 2, "provenance flag", r) == 1;
  if (h.image_size == 0) throw FormatError(r.context() + ": image_size is zero");
  return h;
}

rpm::Puzzle read_record(binary::Reader& r, const Header& h) {
  rpm::Puzzle p;
  p.image_size = h.image_size;
  p.answer = r.u8();
  if (p.answer > 7) throw FormatError(r.context() + ": answer byte " + std::to_string(p.answer) + " outside 0..7");
  const std::size_t px = h.image_size * h.image_size;
  for (int i = 0; i < 16; ++i) {
    rpm::Image& img = i < 8 ? p.context[i] : p.choices[i - 8];
    const std::uint8_t* data = r.take(px);
    img.size = h.image_size;
    img.pixels.assign(data, data + px);
  }
  if (h.has_provenance) {
    const bool present = checked(r.u8(), 2, "provenance present flag", r) == 1;
    if (present) {
      p.provenance = read_provenance(r);
    } else {
      r.take(kProvenanceBytes);
    }
  }
  return p;
}

}  // namespace

std::size_t record_bytes(std::size_t image_size, bool has_provenance) {
  return 1 + 16 * image_size * image_size + (has_provenance ? 1 + kProvenanceBytes : 0);
}

std::vector<std::uint8_t> encode_dataset(const std::vector<rpm::Puzzle>& puzzles) {
  if (puzzles.empty()) throw std::invalid_argument("encode_dataset: no puzzles");
  const std::size_t size = puzzles.front().image_size;
  bool any_prov = false, all_prov = true, all_center = true, all_grid = true;
  for (const auto& p : puzzles) {
    if (p.image_size != size) throw std::invalid_argument("encode_dataset: puzzles differ in image_size");
    if (p.answer < 0 || p.answer > 7) throw std::invalid_argument("encode_dataset: answer outside 0..7");
    for (int i = 0; i < 16; ++i) {
      const rpm::Image& img = i < 8 ? p.context[i] : p.choices[i - 8];
      if (img.size != size || img.pixels.size() != size * size)
        throw std::invalid_argument("encode_dataset: image does not match image_size");
    }
    any_prov = any_prov || p.provenance.has_value();
    all_prov = all_prov && p.provenance.has_value();
    all_center = all_center && p.provenance && p.provenance->rules.config == rpm::Config::center;
    all_grid = all_grid && p.provenance && p.provenance->rules.config == rpm::Config::grid2x2;
  }
  SourceTag source = SourceTag::mixed;
  if (!any_prov) source = SourceTag::external;
  else if (all_center) source = SourceTag::center;
  else if (all_grid) source = SourceTag::grid2x2;

  binary::Writer w;
  w.text(kMagic);
  w.u32(kDatasetVersion);
  w.u64(puzzles.size());
  w.u32(static_cast<std::uint32_t>(size));
  w.u8(static_cast<std::uint8_t>(source));
  w.u8(any_prov ? 1 : 0);
  for (const auto& p : puzzles) {
    w.u8(static_cast<std::uint8_t>(p.answer));
    for (const auto& img : p.context) w.bytes(img.pixels.data(), img.pixels.size());
    for (const auto& img : p.choices) w.bytes(img.pixels.data(), img.pixels.size());
    if (!any_prov) continue;
    w.u8(p.provenance ? 1 : 0);
    if (p.provenance) {
      write_provenance(w, *p.provenance);
    } else {
      for (std::size_t i = 0; i < kProvenanceBytes; ++i) w.u8(0);
    }
  }
  return w.take();
}

Dataset decode_dataset(const std::vector<std::uint8_t>& bytes, const std::string& context) {
  binary::Reader r(bytes.data(), bytes.size(), context);
  const Header h = read_header(r);
  const std::size_t rec = record_bytes(h.image_size, h.has_provenance);
  if (h.count > r.remaining() / rec) {
    throw FormatError(context + ": truncated, header declares " + std::to_string(h.count) +
                      " records of " + std::to_string(rec) + " bytes but only " +
                      std::to_string(r.remaining()) + " bytes follow");
  }
  Dataset d;
  d.source = h.source;
  d.image_size = h.image_size;
  d.puzzles.reserve(h.count);
  for (std::uint64_t i = 0; i < h.count; ++i) d.puzzles.push_back(read_record(r, h));
  if (r.remaining() != 0)
    throw FormatError(context + ": " + std::to_string(r.remaining()) + " trailing bytes after last record");
  return d;
}

void save_dataset(const std::string& path, const std::vector<rpm::Puzzle>& puzzles) {
  binary::write_file(path, encode_dataset(puzzles));
}

Dataset load_dataset(const std::string& path) { return decode_dataset(binary::read_file(path), path); }

rpm::Puzzle load_record(const std::string& path, std::size_t index) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<std::uint8_t> head(kHeaderBytes);
  in.read(reinterpret_cast<char*>(head.data()), static_cast<std::streamsize>(head.size()));
  head.resize(static_cast<std::size_t>(in.gcount()));
  binary::Reader hr(head.data(), head.size(), path);
  const Header h = read_header(hr);
  if (index >= h.count)
    throw std::out_of_range(path + ": record " + std::to_string(index) + " of " + std::to_string(h.count));
  const std::size_t rec = record_bytes(h.image_size, h.has_provenance);
  std::vector<std::uint8_t> body(rec);
  in.seekg(static_cast<std::streamoff>(kHeaderBytes + index * rec));
  in.read(reinterpret_cast<char*>(body.data()), static_cast<std::streamsize>(rec));
  body.resize(static_cast<std::size_t>(in.gcount()));
  binary::Reader r(body.data(), body.size(), path + " record " + std::to_string(index));
  return read_record(r, h);
}

rpm::Image resize_area(const std::uint8_t* pixels, std::size_t height, std::size_t width,
                       std::size_t size) {
  if (height == 0 || width == 0 || size == 0) throw std::invalid_argument("resize_area: empty image");
  // Output cell o spans [o*H, (o+1)*H) and input pixel i spans [i*S, (i+1)*S)
  // in units of 1/(S) input pixels, so overlaps are exact integers.
  auto overlaps = [size](std::size_t in_len) {
    std::vector<std::vector<std::pair<std::size_t, std::uint64_t>>> out(size);
    for (std::size_t o = 0; o < size; ++o) {
      const std::uint64_t lo = o * in_len, hi = (o + 1) * in_len;
      for (std::size_t i = lo / size; i < in_len && i * size < hi; ++i) {
        const std::uint64_t a = std::max<std::uint64_t>(lo, i * size);
        const std::uint64_t b = std::min<std::uint64_t>(hi, (i + 1) * size);
        if (b > a) out[o].push_back({i, b - a});
      }
    }
    return out;
  };
  const auto ys = overlaps(height), xs = overlaps(width);
  const std::uint64_t denom = static_cast<std::uint64_t>(height) * width;
  rpm::Image img{size, std::vector<std::uint8_t>(size * size)};
  for (std::size_t oy = 0; oy < size; ++oy)
    for (std::size_t ox = 0; ox < size; ++ox) {
      std::uint64_t acc = 0;
      for (auto [iy, wy] : ys[oy])
        for (auto [ix, wx] : xs[ox]) acc += wy * wx * pixels[iy * width + ix];
      img.pixels[oy * size + ox] = static_cast<std::uint8_t>((acc + denom / 2) / denom);
    }
  return img;
}

std::vector<std::uint8_t> encode_external_record(const std::vector<std::uint8_t>& stack,
                                                 std::uint32_t depth, std::uint32_t height,
                                                 std::uint32_t width, int target) {
  if (stack.size() != static_cast<std::size_t>(depth) * height * width)
    throw std::invalid_argument("encode_external_record: stack size does not match dimensions");
  binary::Writer w;
  w.u32(depth);
  w.u32(height);
  w.u32(width);
  w.bytes(stack.data(), stack.size());
  if (target >= 0) w.text("target=" + std::to_string(target) + "\n");
  return w.take();
}

ImportReport import_external(const std::filesystem::path& dir, std::size_t image_size) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw std::runtime_error("import: not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file()) files.push_back(entry.path());
  std::sort(files.begin(), files.end());

  ImportReport report;
  for (const auto& file : files) {
    const std::string name = file.filename().string();
    try {
      const auto bytes = binary::read_file(file.string());
      binary::Reader r(bytes.data(), bytes.size(), name);
      const std::uint32_t depth = r.u32(), height = r.u32(), width = r.u32();
      if (depth != 16) throw FormatError("stack depth " + std::to_string(depth) + ", expected 16");
      if (height == 0 || width == 0) throw FormatError("zero image dimension");
      const std::size_t px = static_cast<std::size_t>(height) * width;
      if (px > r.remaining() / 16) throw FormatError("truncated image stack");
      const std::uint8_t* stack = r.take(16 * px);

      std::istringstream meta(r.text(r.remaining()));
      std::string line;
      int target = -1;
      while (std::getline(meta, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.rfind("target=", 0) != 0) continue;
        const std::string v = line.substr(7);
        if (v.size() != 1 || v[0] < '0' || v[0] > '7') throw FormatError("target '" + v + "' outside 0..7");
        target = v[0] - '0';
      }
      if (target < 0) throw FormatError("missing target");

      rpm::Puzzle p;
      p.answer = target;
      p.image_size = image_size;
      for (int i = 0; i < 16; ++i) {
        rpm::Image img = resize_area(stack + i * px, height, width, image_size);
        (i < 8 ? p.context[i] : p.choices[i - 8]) = std::move(img);
      }
      report.puzzles.push_back(std::move(p));
      report.imported.push_back(name);
    } catch (const std::exception& e) {
      report.rejected.push_back({name, e.what()});
    }
  }
  return report;
}

std::vector<std::size_t> subsample_indices(std::size_t n, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0))
    throw std::invalid_argument("subsample: fraction must be in (0, 1], got " + std::to_string(fraction));
  const auto k = static_cast<std::size_t>(std::floor(static_cast<double>(n) * fraction));
  if (k == 0) {
    throw std::invalid_argument("subsample: floor(" + std::to_string(n) + " * " +
                                std::to_string(fraction) + ") is empty");
  }
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  Rng rng(seed);
  for (std::size_t i = 0; i < k; ++i) std::swap(idx[i], idx[i + uniform_index(rng, n - i)]);
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

std::vector<rpm::Puzzle> subsample(const std::vector<rpm::Puzzle>& puzzles, double fraction,
                                   std::uint64_t seed) {
  std::vector<rpm::Puzzle> out;
  for (std::size_t i : subsample_indices(puzzles.size(), fraction, seed)) out.push_back(puzzles[i]);
  return out;
}

std::uint64_t content_hash(const rpm::Puzzle& puzzle) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](std::uint8_t b) { h = (h ^ b) * 0x100000001b3ULL; };
  mix(static_cast<std::uint8_t>(puzzle.answer));
  for (const auto* set : {&puzzle.context, &puzzle.choices})
    for (const auto& img : *set)
      for (std::uint8_t b : img.pixels) mix(b);
  return h;
}

}  // namespace dcnet::data
