#include "srg/checkpoint.hpp"

#include <limits>

#include "srg/binary_io.hpp"

namespace srg {

std::string encode_checkpoint(const std::vector<NamedTensor>& tensors) {
  io::ByteWriter w;
  w.bytes("SRGW");
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    if (name.size() > std::numeric_limits<std::uint16_t>::max()) throw ArgumentError("checkpoint: name too long");
    if (t.rank() > std::numeric_limits<std::uint8_t>::max()) throw ArgumentError("checkpoint: rank too large");
    w.u16(static_cast<std::uint16_t>(name.size()));
    w.bytes(name);
    w.u8(static_cast<std::uint8_t>(t.rank()));
    for (std::size_t d : t.shape) w.u32(static_cast<std::uint32_t>(d));
    w.f32s(t.data);
  }
  return w.buffer();
}

std::vector<NamedTensor> decode_checkpoint(std::string bytes, const std::string& source) {
  io::ByteReader r(std::move(bytes), source);
  r.expect_magic("SRGW");
  const std::size_t version_at = r.offset();
  if (const auto version = r.u32("version"); version != kCheckpointVersion) {
    r.fail("unsupported version " + std::to_string(version), version_at);
  }
  const std::uint32_t count = r.u32("tensor count");
  std::vector<NamedTensor> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor nt;
    nt.name = r.str(r.u16("name length"), "name");
    const std::size_t rank_at = r.offset();
    const std::uint8_t rank = r.u8("rank");
    if (rank == 0) r.fail("zero rank for tensor '" + nt.name + "'", rank_at);
    Shape shape;
    for (std::uint8_t d = 0; d < rank; ++d) {
      const std::size_t dim_at = r.offset();
      const std::uint32_t dim = r.u32("dimension");
      if (dim == 0) r.fail("zero dimension for tensor '" + nt.name + "'", dim_at);
      shape.push_back(dim);
    }
    auto data = r.f32s(shape_numel(shape), "tensor data");
    nt.tensor = Tensor(std::move(shape), std::move(data));
    nt.tensor.requires_grad = true;
    out.push_back(std::move(nt));
  }
  r.expect_end();
  return out;
}

void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors) {
  io::write_file_atomic(path, encode_checkpoint(tensors));
}

std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(io::read_file(path), path.string());
}

void assign_checkpoint(const std::vector<NamedTensor>& stored,
                       const std::function<void(const ParamVisitor&)>& visit) {
  std::size_t index = 0;
  visit([&](const std::string& name, Tensor& t) {
    if (index >= stored.size()) throw ValidationError("checkpoint is missing tensor '" + name + "'");
    const NamedTensor& s = stored[index++];
    if (s.name != name) throw ValidationError("checkpoint tensor '" + s.name + "' where '" + name + "' expected");
    if (s.tensor.shape != t.shape) {
      throw ValidationError("checkpoint tensor '" + name + "' has shape " + shape_to_string(s.tensor.shape) +
                            ", model expects " + shape_to_string(t.shape));
    }
    t.data = s.tensor.data;
  });
  if (index != stored.size()) {
    throw ValidationError("checkpoint has " + std::to_string(stored.size() - index) + " unexpected extra tensors");
  }
}

std::vector<NamedTensor> collect_named(const std::function<void(const ParamVisitor&)>& visit) {
  std::vector<NamedTensor> out;
  visit([&](const std::string& name, Tensor& t) {
    Tensor copy(t.shape, t.data);
    out.push_back({name, std::move(copy)});
  });
  return out;
}

}  // namespace srg
