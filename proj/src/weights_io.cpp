#include "ep2t/weights_io.hpp"

#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "ep2t/binary.hpp"
#include "ep2t/error.hpp"

namespace ep2t {

namespace {

struct RawTensor {
  std::vector<std::uint32_t> dims;
  std::vector<float> data;
};

std::size_t dim_at(const std::map<std::string, RawTensor>& tensors, const std::string& name,
                   std::size_t axis) {
  const auto it = tensors.find(name);
  if (it == tensors.end() || it->second.dims.size() <= axis) {
    throw Error(ErrorCode::ParseError, "weights file lacks tensor " + name);
  }
  return it->second.dims[axis];
}

}  // namespace

void write_weights(std::ostream& out, const NetWeights<float>& weights) {
  auto copy = weights;
  const auto tensors = named_tensors(copy);
  binary::put_magic(out, "EP2T");
  binary::put(out, kWeightsVersion);
  binary::put(out, static_cast<std::uint16_t>(tensors.size()));
  for (const auto& t : tensors) {
    binary::put(out, static_cast<std::uint16_t>(t.name.size()));
    out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    binary::put(out, static_cast<std::uint8_t>(t.rank));
    if (t.rank == 2) binary::put(out, static_cast<std::uint32_t>(t.tensor->rows));
    binary::put(out, static_cast<std::uint32_t>(t.tensor->cols));
    out.write(reinterpret_cast<const char*>(t.tensor->data.data()),
              static_cast<std::streamsize>(t.tensor->data.size() * sizeof(float)));
  }
}

NetWeights<float> read_weights(std::istream& in) {
  binary::Reader reader(in);
  reader.expect_magic("EP2T");
  const auto version = reader.get<std::uint16_t>("version");
  if (version != kWeightsVersion) {
    throw Error(ErrorCode::ParseError, "unsupported weights version " + std::to_string(version));
  }
  const auto count = reader.get<std::uint16_t>("tensor count");
  std::map<std::string, RawTensor> tensors;
  for (std::uint16_t i = 0; i < count; ++i) {
    const auto len = reader.get<std::uint16_t>("name length");
    std::string name(len, '\0');
    reader.read(name.data(), len, "tensor name");
    const auto rank = reader.get<std::uint8_t>("rank");
    if (rank < 1 || rank > 2) {
      throw Error(ErrorCode::ParseError, "tensor " + name + " has unsupported rank " +
                                             std::to_string(rank));
    }
    RawTensor t;
    std::size_t total = 1;
    for (int d = 0; d < rank; ++d) {
      t.dims.push_back(reader.get<std::uint32_t>("tensor dim"));
      total *= t.dims.back();
    }
    if (total > (std::size_t{1} << 28)) {
      throw Error(ErrorCode::ParseError, "tensor " + name + " is implausibly large");
    }
    t.data.resize(total);
    reader.read(reinterpret_cast<char*>(t.data.data()), total * sizeof(float), "tensor data");
    if (!tensors.emplace(name, std::move(t)).second) {
      throw Error(ErrorCode::ParseError, "duplicate tensor " + name);
    }
  }

  const std::size_t channels = dim_at(tensors, "sta.merge", 1);
  const std::array<std::size_t, 2> hidden{dim_at(tensors, "la.spatial.layer0.weight", 1),
                                          dim_at(tensors, "la.spatial.layer1.weight", 1)};
  auto weights = cast_weights<float>(init_weights(0, channels, StaInit::Zero, hidden));
  const auto slots = named_tensors(weights);
  if (slots.size() != tensors.size()) {
    throw Error(ErrorCode::ParseError, "expected " + std::to_string(slots.size()) +
                                           " tensors, file has " + std::to_string(tensors.size()));
  }
  for (const auto& slot : slots) {
    const auto it = tensors.find(slot.name);
    if (it == tensors.end()) throw Error(ErrorCode::ParseError, "weights file lacks tensor " + slot.name);
    const RawTensor& t = it->second;
    const bool shape_ok = slot.rank == 2 ? t.dims.size() == 2 && t.dims[0] == slot.tensor->rows &&
                                               t.dims[1] == slot.tensor->cols
                                         : t.dims.size() == 1 && t.dims[0] == slot.tensor->cols;
    if (!shape_ok) throw Error(ErrorCode::ParseError, "tensor " + slot.name + " has the wrong shape");
    slot.tensor->data = t.data;
  }
  return weights;
}

NetWeights<float> load_weights(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  return read_weights(in);
}

void save_weights(const std::filesystem::path& path, const NetWeights<float>& weights) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  write_weights(out, weights);
}

}  // namespace ep2t
