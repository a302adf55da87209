#include "dmsm/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <vector>

#include <nlohmann/json.hpp>

namespace dmsm {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

using nlohmann::json;
constexpr char kMagic[8] = {'D', 'M', 'S', 'M', 'C', 'K', 'P', 'T'};

json config_json(const nn::LhanConfig& c) {
  return {{"in_channels", c.in_channels}, {"out_channels", c.out_channels},
          {"channels", c.channels},       {"n_pab", c.n_pab},
          {"kernel", c.kernel},           {"concat_blocks", c.concat_blocks},
          {"time_dim", c.time_dim},       {"mlp_layers", c.mlp_layers},
          {"attn_dim", c.attn_dim}};
}

nn::LhanConfig config_from(const json& j) {
  nn::LhanConfig c;
  c.in_channels = j.at("in_channels");
  c.out_channels = j.at("out_channels");
  c.channels = j.at("channels");
  c.n_pab = j.at("n_pab");
  c.kernel = j.at("kernel");
  c.concat_blocks = j.at("concat_blocks").get<std::vector<int>>();
  c.time_dim = j.at("time_dim");
  c.mlp_layers = j.at("mlp_layers");
  c.attn_dim = j.at("attn_dim");
  return c;
}

std::string describe(const nn::LhanConfig& c) { return config_json(c).dump(); }

struct Group {
  const char* name;
  Model* model;
};

}  // namespace

std::uint64_t fnv1a64(const void* data, std::size_t size, std::uint64_t h) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < size; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string file_digest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<char> buf(1 << 16);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    h = fnv1a64(buf.data(), static_cast<std::size_t>(in.gcount()), h);
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  json tensors = json::array();
  std::vector<float> payload;
  auto add_group = [&](const char* group, const Model& m) {
    m.visit([&](const std::string& name, auto span, const std::vector<int>& shape) {
      tensors.push_back({{"name", name}, {"group", group}, {"shape", shape},
                         {"offset", payload.size()}, {"count", span.size()}});
      payload.insert(payload.end(), span.begin(), span.end());
    });
  };
  add_group("param", ck.model);
  add_group("adam_m", ck.adam.m);
  add_group("adam_v", ck.adam.v);

  const std::size_t bytes = payload.size() * sizeof(float);
  json header = {
      {"format", "dmsm-checkpoint"},
      {"version", kCheckpointVersion},
      {"architecture", config_json(ck.model.config)},
      {"schedule", {{"kind", "betas"}, {"betas", ck.schedule.betas()}}},
      {"backbone", {{"use_dc", ck.backbone.use_dc}, {"use_condition", ck.backbone.use_condition}}},
      {"step", ck.step},
      {"adam_step", ck.adam.step},
      {"best_metric", ck.best_metric},
      {"extra", json::parse(ck.extra_json.empty() ? "{}" : ck.extra_json)},
      {"tensors", tensors},
      {"payload_bytes", bytes},
      {"payload_fnv1a64", fnv1a64(payload.data(), bytes)},
  };
  const std::string text = header.dump();

  std::filesystem::create_directories(path.parent_path().empty() ? "." : path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write " + tmp.string());
    const std::uint32_t version = kCheckpointVersion;
    const std::uint32_t reserved = 0;
    const std::uint64_t hlen = text.size();
    out.write(kMagic, 8);
    out.write(reinterpret_cast<const char*>(&version), 4);
    out.write(reinterpret_cast<const char*>(&reserved), 4);
    out.write(reinterpret_cast<const char*>(&hlen), 8);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    out.write(reinterpret_cast<const char*>(payload.data()), static_cast<std::streamsize>(bytes));
    if (!out) throw CheckpointError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path,
                           const std::optional<nn::LhanConfig>& expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  const auto file_size = std::filesystem::file_size(path);

  char magic[8];
  std::uint32_t version = 0, reserved = 0;
  std::uint64_t hlen = 0;
  in.read(magic, 8);
  in.read(reinterpret_cast<char*>(&version), 4);
  in.read(reinterpret_cast<char*>(&reserved), 4);
  in.read(reinterpret_cast<char*>(&hlen), 8);
  if (!in) throw CheckpointError("checkpoint truncated in preamble: " + path.string());
  if (std::memcmp(magic, kMagic, 8) != 0) throw CheckpointError("not a dmsm checkpoint: " + path.string());
  if (version != kCheckpointVersion)
    throw CheckpointError("checkpoint format version " + std::to_string(version) + " unsupported (expected " +
                          std::to_string(kCheckpointVersion) + ")");
  if (hlen > file_size - 24) throw CheckpointError("checkpoint truncated in header: " + path.string());

  std::string text(hlen, '\0');
  in.read(text.data(), static_cast<std::streamsize>(hlen));
  json header;
  try {
    header = json::parse(text);
  } catch (const std::exception& e) {
    throw CheckpointError(std::string("corrupt checkpoint header: ") + e.what());
  }

  try {
    if (header.at("version").get<std::uint32_t>() != kCheckpointVersion)
      throw CheckpointError("checkpoint header version mismatch");
    const std::uint64_t bytes = header.at("payload_bytes");
    if (24 + hlen + bytes != file_size)
      throw CheckpointError("checkpoint truncated or padded: expected " + std::to_string(24 + hlen + bytes) +
                            " bytes, found " + std::to_string(file_size));
    std::vector<float> payload(bytes / sizeof(float));
    in.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(bytes));
    if (!in) throw CheckpointError("checkpoint truncated in payload");
    if (fnv1a64(payload.data(), bytes) != header.at("payload_fnv1a64").get<std::uint64_t>())
      throw CheckpointError("checkpoint payload checksum mismatch");

    const nn::LhanConfig arch = config_from(header.at("architecture"));
    if (expected && !(arch == *expected))
      throw CheckpointError("architecture mismatch: checkpoint " + describe(arch) + " vs configured " +
                            describe(*expected));
    arch.validate();

    Checkpoint ck;
    ck.model = Model::zeros(arch);
    ck.adam = AdamState::zeros(arch);
    ck.schedule = NoiseSchedule::from_betas(header.at("schedule").at("betas").get<std::vector<double>>());
    ck.backbone.use_dc = header.at("backbone").at("use_dc");
    ck.backbone.use_condition = header.at("backbone").at("use_condition");
    ck.step = header.at("step");
    ck.adam.step = header.at("adam_step");
    ck.best_metric = header.at("best_metric");
    ck.extra_json = header.at("extra").dump();

    const auto& tensors = header.at("tensors");
    std::size_t k = 0;
    auto fill = [&](const char* group, Model& m) {
      m.visit([&](const std::string& name, std::span<Real> span, const std::vector<int>& shape) {
        if (k >= tensors.size()) throw CheckpointError("checkpoint is missing tensor " + name);
        const auto& t = tensors[k++];
        if (t.at("name") != name || t.at("group") != group)
          throw CheckpointError("unexpected tensor " + t.at("name").get<std::string>() + ", expected " + name);
        const auto s = t.at("shape").get<std::vector<int>>();
        if (s != shape)
          throw CheckpointError("shape mismatch for " + name + ": checkpoint " + t.at("shape").dump() +
                                ", model " + json(shape).dump());
        const std::size_t off = t.at("offset");
        const std::size_t count = t.at("count");
        if (count != span.size() || off + count > payload.size())
          throw CheckpointError("tensor " + name + " out of payload bounds");
        std::copy_n(payload.begin() + static_cast<std::ptrdiff_t>(off), count, span.begin());
      });
    };
    fill("param", ck.model);
    fill("adam_m", ck.adam.m);
    fill("adam_v", ck.adam.v);
    if (k != tensors.size()) throw CheckpointError("checkpoint has unexpected extra tensors");
    return ck;
  } catch (const CheckpointError&) {
    throw;
  } catch (const std::exception& e) {
    throw CheckpointError(std::string("malformed checkpoint: ") + e.what());
  }
}

}  // namespace dmsm
