#include "p5rec/model/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

namespace p5rec::model {

namespace {

constexpr char kMagic[8] = {'P', '5', 'R', 'E', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void write_pod(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw ModelError("checkpoint truncated");
  return v;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Seq2SeqModel& model, std::uint64_t vocab_hash,
                     std::int64_t step) {
  nlohmann::json header;
  header["config"] = model.config();
  header["vocab_hash"] = to_hex(vocab_hash);
  header["step"] = step;
  auto& tensors = header["tensors"] = nlohmann::json::array();
  for (const auto& p : model.parameters()) {
    tensors.push_back({{"name", p.name}, {"rows", p.value.rows()}, {"cols", p.value.cols()}});
  }
  const std::string text = header.dump();

  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ModelError("cannot write checkpoint " + path.string());
    out.write(kMagic, sizeof(kMagic));
    write_pod(out, kVersion);
    write_pod(out, static_cast<std::uint64_t>(text.size()));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& p : model.parameters()) {
      out.write(reinterpret_cast<const char*>(p.value.data()),
                static_cast<std::streamsize>(p.value.size() * sizeof(double)));
    }
    if (!out) throw ModelError("failed writing checkpoint " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint_unchecked(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ModelError("cannot open checkpoint " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw ModelError("not a checkpoint: " + path.string());
  if (read_pod<std::uint32_t>(in) != kVersion) throw ModelError("unsupported checkpoint version");
  const auto len = read_pod<std::uint64_t>(in);
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw ModelError("checkpoint header truncated");
  const auto header = nlohmann::json::parse(text);

  Seq2SeqModel model(header.at("config").get<ModelConfig>());
  const auto& tensors = header.at("tensors");
  auto& params = model.parameters();
  if (tensors.size() != params.size()) throw ModelError("checkpoint tensor count does not match its config");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& t = tensors[i];
    auto& p = params[i];
    if (t.at("name").get<std::string>() != p.name || t.at("rows").get<Eigen::Index>() != p.value.rows() ||
        t.at("cols").get<Eigen::Index>() != p.value.cols()) {
      throw ModelError("checkpoint tensor '" + t.at("name").get<std::string>() + "' does not match the model layout");
    }
    in.read(reinterpret_cast<char*>(p.value.data()), static_cast<std::streamsize>(p.value.size() * sizeof(double)));
    if (!in) throw ModelError("checkpoint tensor data truncated");
  }
  const auto hash = std::stoull(header.at("vocab_hash").get<std::string>(), nullptr, 16);
  return Checkpoint{std::move(model), hash, header.at("step").get<std::int64_t>()};
}

Checkpoint load_checkpoint(const std::filesystem::path& path, std::uint64_t expected_vocab_hash) {
  auto ckpt = load_checkpoint_unchecked(path);
  if (ckpt.vocab_hash != expected_vocab_hash) {
    throw ModelError("checkpoint " + path.string() + " was trained with vocab " + to_hex(ckpt.vocab_hash) +
                     ", not " + to_hex(expected_vocab_hash));
  }
  return ckpt;
}

}  // namespace p5rec::model
