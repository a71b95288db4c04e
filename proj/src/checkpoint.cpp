#include "lenslearn/checkpoint.hpp"

#include "binary_io.hpp"
#include "lenslearn/io.hpp"

namespace lenslearn {

std::vector<std::uint8_t> encode_checkpoint(const std::vector<CheckpointEntry>& entries) {
  detail::Writer w;
  w.text("LLTN");
  w.u32(kCheckpointVersion);
  for (const auto& e : entries) {
    w.u32(static_cast<std::uint32_t>(e.name.size()));
    w.text(e.name);
    w.u32(static_cast<std::uint32_t>(e.value.rank()));
    for (auto extent : e.value.shape()) w.u32(static_cast<std::uint32_t>(extent));
    w.bytes(e.value.data().data(), e.value.size() * sizeof(float));
  }
  return w.buffer();
}

std::vector<CheckpointEntry> decode_checkpoint(const std::vector<std::uint8_t>& bytes,
                                               const std::string& source) {
  detail::Reader r(bytes, source);
  if (r.text(4, "magic") != "LLTN") r.fail_at(0, "bad magic, expected \"LLTN\"");
  const std::uint32_t version = r.u32("version");
  if (version != kCheckpointVersion) {
    r.fail_at(4, "unsupported checkpoint version " + std::to_string(version));
  }
  std::vector<CheckpointEntry> entries;
  while (!r.at_end()) {
    CheckpointEntry e;
    const std::uint32_t len = r.u32("name length");
    e.name = r.text(len, "tensor name");
    const std::uint32_t rank = r.u32("rank");
    if (rank > 8) r.fail("implausible rank " + std::to_string(rank) + " for '" + e.name + "'");
    Shape shape(rank);
    for (auto& extent : shape) extent = r.u32("extent");
    std::vector<float> data(shape_numel(shape));
    r.bytes(data.data(), data.size() * sizeof(float), "tensor values");
    e.value = Tensor(std::move(shape), std::move(data));
    entries.push_back(std::move(e));
  }
  return entries;
}

void save_checkpoint(const std::filesystem::path& path, nn::Module<float>& net) {
  std::vector<CheckpointEntry> entries;
  for (const auto& s : nn::named_state(net)) entries.push_back({s.name, *s.tensor});
  write_file(path, encode_checkpoint(entries));
}

void load_checkpoint(const std::filesystem::path& path, nn::Module<float>& net) {
  const auto entries = decode_checkpoint(read_file(path), path.string());
  auto state = nn::named_state(net);
  if (entries.size() != state.size()) {
    throw ValidationError(path.string() + ": checkpoint holds " + std::to_string(entries.size()) +
                          " tensors, network expects " + std::to_string(state.size()));
  }
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].name != state[i].name) {
      throw ValidationError(path.string() + ": tensor " + std::to_string(i) + " is '" +
                            entries[i].name + "', network expects '" + state[i].name + "'");
    }
    if (entries[i].value.shape() != state[i].tensor->shape()) {
      throw ValidationError(path.string() + ": '" + entries[i].name + "' has shape " +
                            shape_string(entries[i].value.shape()) + ", network expects " +
                            shape_string(state[i].tensor->shape()));
    }
    auto dst = state[i].tensor->data();
    auto src = entries[i].value.data();
    std::copy(src.begin(), src.end(), dst.begin());
  }
}

}  // namespace lenslearn
