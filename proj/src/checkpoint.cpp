#include "kae/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace kae {

namespace {
constexpr const char* kMagic = "KAECHKPT v1";

void write_tensor(std::ostream& os, const std::string& name, const Array& a) {
  os << "TENSOR " << name << " " << a.ndim();
  for (int d : a.shape) os << " " << d;
  os << "\n";
  std::vector<float> buf(a.data.size());
  for (size_t i = 0; i < a.data.size(); ++i)
    buf[i] = static_cast<float>(a.data[i]);
  os.write(reinterpret_cast<const char*>(buf.data()),
           static_cast<std::streamsize>(buf.size() * sizeof(float)));
  os << "\n";
}

Array read_tensor_body(std::istream& is, const std::vector<int>& shape) {
  Array a(shape);
  std::vector<float> buf(a.data.size());
  is.read(reinterpret_cast<char*>(buf.data()),
          static_cast<std::streamsize>(buf.size() * sizeof(float)));
  if (!is) throw std::runtime_error("checkpoint: truncated tensor data");
  char nl = 0;
  is.get(nl);
  if (nl != '\n') throw std::runtime_error("checkpoint: bad tensor terminator");
  for (size_t i = 0; i < buf.size(); ++i)
    a.data[i] = static_cast<double>(buf[i]);
  return a;
}

nlohmann::json config_to_json(const ModelConfig& c) {
  return {{"encoder_layers", c.encoder_layers},
          {"decoder_layers", c.decoder_layers},
          {"heads", c.heads},
          {"embed", c.embed},
          {"latent_positions", c.latent_positions},
          {"max_len", c.max_len},
          {"vocab_size", c.vocab_size},
          {"ffn", c.ffn},
          {"conditional", c.conditional},
          {"kl_mode", c.kl_mode},
          {"dropout", c.dropout}};
}

ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.encoder_layers = j.at("encoder_layers");
  c.decoder_layers = j.at("decoder_layers");
  c.heads = j.at("heads");
  c.embed = j.at("embed");
  c.latent_positions = j.at("latent_positions");
  c.max_len = j.at("max_len");
  c.vocab_size = j.at("vocab_size");
  c.ffn = j.at("ffn");
  c.conditional = j.at("conditional");
  c.kl_mode = j.at("kl_mode");
  c.dropout = j.at("dropout");
  return c;
}
}  // namespace

void save_checkpoint(const std::string& path, const KaeModel& model,
                     const Adam* optimizer, std::uint64_t seed, int epoch) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("checkpoint: cannot open " + path);
  nlohmann::json header = {
      {"format_version", 1},
      {"config", config_to_json(model.config())},
      {"vocab_chars", model.vocab().chars()},
      {"seed", seed},
      {"epoch", epoch},
      {"has_optimizer", optimizer != nullptr},
  };
  if (optimizer) {
    header["adam"] = {{"lr", optimizer->config().lr},
                      {"beta1", optimizer->config().beta1},
                      {"beta2", optimizer->config().beta2},
                      {"eps", optimizer->config().eps},
                      {"step_count", optimizer->step_count()}};
  }
  os << kMagic << "\n" << header.dump() << "\n";
  const auto& named = model.named_parameters();
  for (const auto& [name, t] : named) write_tensor(os, name, t.value());
  if (optimizer) {
    auto* opt = const_cast<Adam*>(optimizer);
    for (size_t i = 0; i < named.size(); ++i) {
      write_tensor(os, "adam.m." + named[i].first, opt->moments1()[i]);
      write_tensor(os, "adam.v." + named[i].first, opt->moments2()[i]);
    }
  }
  os << "END\n";
  if (!os) throw std::runtime_error("checkpoint: write failed");
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open " + path);
  std::string line;
  std::getline(is, line);
  if (line != kMagic) throw std::runtime_error("checkpoint: bad magic");
  std::getline(is, line);
  nlohmann::json header = nlohmann::json::parse(line);
  if (header.at("format_version").get<int>() != 1)
    throw std::runtime_error("checkpoint: unsupported format version");
  ModelConfig cfg = config_from_json(header.at("config"));
  Vocabulary vocab = Vocabulary::from_chars(header.at("vocab_chars"));
  LoadedCheckpoint out;
  out.seed = header.at("seed");
  out.epoch = header.at("epoch");
  out.model = std::make_unique<KaeModel>(cfg, vocab, Rng(0));

  std::vector<std::pair<std::string, Array>> tensors;
  while (std::getline(is, line)) {
    if (line == "END") break;
    if (line.rfind("TENSOR ", 0) != 0)
      throw std::runtime_error("checkpoint: unexpected record: " + line);
    std::istringstream hs(line.substr(7));
    std::string name;
    int ndim = 0;
    hs >> name >> ndim;
    std::vector<int> shape(static_cast<size_t>(ndim));
    for (auto& d : shape) hs >> d;
    if (!hs) throw std::runtime_error("checkpoint: bad tensor header");
    tensors.push_back({name, read_tensor_body(is, shape)});
  }

  auto find = [&tensors](const std::string& name) -> Array& {
    for (auto& [n, a] : tensors)
      if (n == name) return a;
    throw std::runtime_error("checkpoint: missing tensor " + name);
  };
  for (const auto& [name, t] : out.model->named_parameters()) {
    Array& a = find(name);
    if (a.shape != t.value().shape)
      throw std::runtime_error("checkpoint: shape mismatch for " + name);
    const_cast<Tensor&>(t).mutable_value() = a;
  }
  if (header.at("has_optimizer").get<bool>()) {
    AdamConfig ac;
    ac.lr = header.at("adam").at("lr");
    ac.beta1 = header.at("adam").at("beta1");
    ac.beta2 = header.at("adam").at("beta2");
    ac.eps = header.at("adam").at("eps");
    out.optimizer = std::make_unique<Adam>(out.model->parameters(), ac);
    out.optimizer->set_step_count(header.at("adam").at("step_count"));
    const auto& named = out.model->named_parameters();
    for (size_t i = 0; i < named.size(); ++i) {
      out.optimizer->moments1()[i] = find("adam.m." + named[i].first);
      out.optimizer->moments2()[i] = find("adam.v." + named[i].first);
    }
  }
  return out;
}

}  // namespace kae
