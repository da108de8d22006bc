#include "alcr/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "alcr/rng.hpp"

namespace alcr::model {

namespace {

constexpr char kMagic[5] = {'A', 'L', 'C', 'R', '1'};
constexpr int kVersion = 1;

void put_u32(std::ostream& out, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b, 4);
}

void put_f64(std::ostream& out, double d) {
  auto v = std::bit_cast<std::uint64_t>(d);
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b, 8);
}

std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

double get_f64(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return std::bit_cast<double>(v);
}

nlohmann::json config_json(const ModelConfig& c) {
  return {{"encoder_layers", c.encoder_layers},
          {"bidirectional", c.bidirectional},
          {"decoder_layers", c.decoder_layers},
          {"hidden_size", c.hidden_size},
          {"embedding_size", c.embedding_size},
          {"input_bins", c.input_bins},
          {"cell", c.cell},
          {"location_attention", c.location_attention},
          {"attention_dim", c.attention_dim},
          {"attention_kernel", c.attention_kernel},
          {"attention_channels", c.attention_channels}};
}

ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.encoder_layers = j.at("encoder_layers").get<int>();
  c.bidirectional = j.at("bidirectional").get<bool>();
  c.decoder_layers = j.at("decoder_layers").get<int>();
  c.hidden_size = j.at("hidden_size").get<int>();
  c.embedding_size = j.at("embedding_size").get<int>();
  c.input_bins = j.at("input_bins").get<int>();
  c.cell = j.at("cell").get<std::string>();
  c.location_attention = j.at("location_attention").get<bool>();
  c.attention_dim = j.at("attention_dim").get<int>();
  c.attention_kernel = j.at("attention_kernel").get<int>();
  c.attention_channels = j.at("attention_channels").get<int>();
  return c;
}

}  // namespace

std::string config_hash(const ModelConfig& config, const Vocabulary& vocab) {
  std::string canon = config_json(config).dump();
  canon += "|letters=" + vocab.letters();
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a(canon)));
  return buf;
}

void save_checkpoint(const std::string& path, const Seq2SeqModel& m) {
  nlohmann::json meta;
  meta["version"] = kVersion;
  meta["config_hash"] = config_hash(m.config(), m.vocab());
  meta["config"] = config_json(m.config());
  meta["letters"] = m.vocab().letters();
  meta["params"] = nlohmann::json::array();
  for (const std::string& name : m.params().names()) {
    const Tensor& p = m.params().at(name);
    meta["params"].push_back({{"name", name}, {"shape", p.shape()}});
  }
  std::string text = meta.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open checkpoint for writing: " + path);
  out.write(kMagic, sizeof(kMagic));
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const std::string& name : m.params().names())
    for (double d : m.params().at(name).data()) put_f64(out, d);
  if (!out) throw std::runtime_error("checkpoint write failed: " + path);
}

Seq2SeqModel load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[5];
  in.read(magic, sizeof(magic));
  if (!in || std::string(magic, 5) != std::string(kMagic, 5))
    throw std::runtime_error("not a checkpoint file: " + path);
  std::uint32_t len = get_u32(in);
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw std::runtime_error("truncated checkpoint metadata: " + path);

  nlohmann::json meta = nlohmann::json::parse(text);
  if (meta.at("version").get<int>() != kVersion)
    throw std::runtime_error("unsupported checkpoint version in " + path);
  ModelConfig config = config_from_json(meta.at("config"));
  Vocabulary vocab(meta.at("letters").get<std::string>());

  Seq2SeqModel m(config, vocab, /*init_seed=*/0);
  for (const auto& entry : meta.at("params")) {
    std::string name = entry.at("name").get<std::string>();
    std::vector<int> shape = entry.at("shape").get<std::vector<int>>();
    if (!m.params().contains(name))
      throw std::runtime_error("checkpoint has unknown parameter: " + name);
    Tensor& p = m.params().at(name);
    if (p.shape() != shape)
      throw std::runtime_error("checkpoint shape mismatch for " + name +
                               ": expected " + autodiff::shape_str(p.shape()) +
                               " got " + autodiff::shape_str(shape));
    for (std::int64_t i = 0; i < p.size(); ++i) p[i] = get_f64(in);
  }
  if (!in) throw std::runtime_error("truncated checkpoint data: " + path);
  return m;
}

}  // namespace alcr::model
