#include "dcnet/checkpoint.hpp"

#include <fstream>
#include <iterator>
#include <map>

#include "dcnet/binary_io.hpp"

namespace dcnet {

namespace binary {

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in),
                                   std::istreambuf_iterator<char>());
}

void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed for " + path);
}

}  // namespace binary

namespace {
constexpr std::string_view kMagic = "DCN1";
}

std::vector<std::uint8_t> encode_checkpoint(std::span<const Parameter> params) {
  binary::Writer w;
  w.text(kMagic);
  w.u64(params.size());
  for (const Parameter& p : params) {
    w.u64(p.name.size());
    w.text(p.name);
    w.u64(p.tensor.rank());
    for (std::size_t d : p.tensor.shape()) w.u64(d);
    for (double v : p.tensor.data()) w.f64(v);
    for (double v : p.adam_m) w.f64(v);
    for (double v : p.adam_v) w.f64(v);
    w.u64(p.step);
  }
  return w.take();
}

std::vector<CheckpointRecord> decode_checkpoint(const std::vector<std::uint8_t>& bytes,
                                                const std::string& context) {
  binary::Reader r(bytes.data(), bytes.size(), context);
  if (r.text(kMagic.size()) != kMagic) throw binary::FormatError(context + ": bad magic, expected DCN1");
  const std::uint64_t count = r.u64();
  std::vector<CheckpointRecord> records;
  for (std::uint64_t i = 0; i < count; ++i) {
    CheckpointRecord rec;
    const std::uint64_t name_len = r.u64();
    if (name_len > r.remaining()) throw binary::FormatError(context + ": truncated parameter name");
    rec.name = r.text(name_len);
    const std::uint64_t rank = r.u64();
    if (rank == 0 || rank > 8) {
      throw binary::FormatError(context + ": parameter " + rec.name + " has invalid rank " +
                                std::to_string(rank));
    }
    std::size_t n = 1;
    for (std::uint64_t d = 0; d < rank; ++d) {
      const std::uint64_t dim = r.u64();
      if (dim == 0 || dim > r.remaining()) {
        throw binary::FormatError(context + ": parameter " + rec.name + " has invalid dimension");
      }
      rec.shape.push_back(dim);
      n *= dim;
    }
    if (n > r.remaining() / 24) throw binary::FormatError(context + ": truncated data for " + rec.name);
    for (auto* arr : {&rec.data, &rec.adam_m, &rec.adam_v}) {
      arr->resize(n);
      for (double& v : *arr) v = r.f64();
    }
    rec.step = r.u64();
    records.push_back(std::move(rec));
  }
  if (r.remaining() != 0) {
    throw binary::FormatError(context + ": " + std::to_string(r.remaining()) +
                              " trailing bytes after last parameter");
  }
  return records;
}

void save_checkpoint(const std::string& path, std::span<const Parameter> params) {
  binary::write_file(path, encode_checkpoint(params));
}

std::vector<CheckpointRecord> read_checkpoint(const std::string& path) {
  return decode_checkpoint(binary::read_file(path), path);
}

void load_checkpoint(const std::string& path, std::span<Parameter> params) {
  std::map<std::string, CheckpointRecord> by_name;
  for (auto& rec : read_checkpoint(path)) {
    const std::string name = rec.name;
    if (!by_name.emplace(name, std::move(rec)).second) {
      throw binary::FormatError(path + ": duplicate parameter " + name);
    }
  }
  if (by_name.size() != params.size()) {
    throw binary::FormatError(path + ": holds " + std::to_string(by_name.size()) +
                              " parameters, model has " + std::to_string(params.size()));
  }
  for (const Parameter& p : params) {
    auto it = by_name.find(p.name);
    if (it == by_name.end()) throw binary::FormatError(path + ": missing parameter " + p.name);
    if (it->second.shape != p.tensor.shape()) {
      throw binary::FormatError(path + ": parameter " + p.name + " has shape " +
                                to_string(it->second.shape) + ", model expects " +
                                to_string(p.tensor.shape()));
    }
  }
  for (Parameter& p : params) {
    CheckpointRecord& rec = by_name.at(p.name);
    std::copy(rec.data.begin(), rec.data.end(), p.tensor.data().begin());
    p.adam_m = std::move(rec.adam_m);
    p.adam_v = std::move(rec.adam_v);
    p.step = rec.step;
  }
}

}  // namespace dcnet
