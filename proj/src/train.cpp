#include "kae/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "kae/checkpoint.hpp"
#include "kae/oracle.hpp"

namespace kae {

namespace {

std::string objective_name(LatentObjective o) {
  switch (o) {
    case LatentObjective::MMD_Modified: return "m-mmd";
    case LatentObjective::MMD_Standard: return "s-mmd";
    case LatentObjective::KL: return "kl";
  }
  throw std::logic_error("objective_name: unknown objective");
}

LatentObjective objective_from_name(const std::string& s) {
  if (s == "m-mmd") return LatentObjective::MMD_Modified;
  if (s == "s-mmd") return LatentObjective::MMD_Standard;
  if (s == "kl") return LatentObjective::KL;
  throw std::invalid_argument("unknown objective: " + s);
}

nlohmann::json model_to_json(const ModelConfig& c) {
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

void model_from_json(const nlohmann::json& j, ModelConfig& c) {
  c.encoder_layers = j.value("encoder_layers", c.encoder_layers);
  c.decoder_layers = j.value("decoder_layers", c.decoder_layers);
  c.heads = j.value("heads", c.heads);
  c.embed = j.value("embed", c.embed);
  c.latent_positions = j.value("latent_positions", c.latent_positions);
  c.max_len = j.value("max_len", c.max_len);
  c.vocab_size = j.value("vocab_size", c.vocab_size);
  c.ffn = j.value("ffn", c.ffn);
  c.conditional = j.value("conditional", c.conditional);
  c.kl_mode = j.value("kl_mode", c.kl_mode);
  c.dropout = j.value("dropout", c.dropout);
}

}  // namespace

void RunConfig::validate() const {
  if (batch_size < 1) throw std::invalid_argument("RunConfig: batch_size >= 1");
  if (epochs < 0) throw std::invalid_argument("RunConfig: epochs >= 0");
  if (eval_samples < 0 || eval_repeats < 1 || eval_beam < 1)
    throw std::invalid_argument("RunConfig: bad evaluation settings");
  loss.validate();
}

std::string run_config_to_json(const RunConfig& cfg) {
  nlohmann::json j = {
      {"model", model_to_json(cfg.model)},
      {"loss",
       {{"lambda", cfg.loss.lambda},
        {"delta", cfg.loss.delta},
        {"two_sigma_sq", cfg.loss.two_sigma_sq},
        {"gaussian_samples", cfg.loss.gaussian_samples},
        {"objective", objective_name(cfg.loss.objective)},
        {"cel_mean_over_batch", cfg.loss.cel_mean_over_batch}}},
      {"adam",
       {{"lr", cfg.adam.lr},
        {"beta1", cfg.adam.beta1},
        {"beta2", cfg.adam.beta2},
        {"eps", cfg.adam.eps}}},
      {"batch_size", cfg.batch_size},
      {"epochs", cfg.epochs},
      {"seed", cfg.seed},
      {"dataset_path", cfg.dataset_path},
      {"out_dir", cfg.out_dir},
      {"property_column", cfg.property_column},
      {"noise_scale", cfg.noise_scale},
      {"eval_samples", cfg.eval_samples},
      {"eval_beam", cfg.eval_beam},
      {"eval_repeats", cfg.eval_repeats},
      {"split",
       {{"train", cfg.ratios.train}, {"validation", cfg.ratios.validation}}}};
  return j.dump(2);
}

RunConfig run_config_from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  RunConfig cfg;
  if (j.contains("model")) model_from_json(j.at("model"), cfg.model);
  if (j.contains("loss")) {
    const auto& l = j.at("loss");
    cfg.loss.lambda = l.value("lambda", cfg.loss.lambda);
    cfg.loss.delta = l.value("delta", cfg.loss.delta);
    cfg.loss.two_sigma_sq = l.value("two_sigma_sq", cfg.loss.two_sigma_sq);
    cfg.loss.gaussian_samples =
        l.value("gaussian_samples", cfg.loss.gaussian_samples);
    if (l.contains("objective"))
      cfg.loss.objective = objective_from_name(l.at("objective"));
    cfg.loss.cel_mean_over_batch =
        l.value("cel_mean_over_batch", cfg.loss.cel_mean_over_batch);
  }
  if (j.contains("adam")) {
    const auto& a = j.at("adam");
    cfg.adam.lr = a.value("lr", cfg.adam.lr);
    cfg.adam.beta1 = a.value("beta1", cfg.adam.beta1);
    cfg.adam.beta2 = a.value("beta2", cfg.adam.beta2);
    cfg.adam.eps = a.value("eps", cfg.adam.eps);
  }
  cfg.batch_size = j.value("batch_size", cfg.batch_size);
  cfg.epochs = j.value("epochs", cfg.epochs);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.dataset_path = j.value("dataset_path", cfg.dataset_path);
  cfg.out_dir = j.value("out_dir", cfg.out_dir);
  cfg.property_column = j.value("property_column", cfg.property_column);
  cfg.noise_scale = j.value("noise_scale", cfg.noise_scale);
  cfg.eval_samples = j.value("eval_samples", cfg.eval_samples);
  cfg.eval_beam = j.value("eval_beam", cfg.eval_beam);
  cfg.eval_repeats = j.value("eval_repeats", cfg.eval_repeats);
  if (j.contains("split")) {
    cfg.ratios.train = j.at("split").value("train", cfg.ratios.train);
    cfg.ratios.validation =
        j.at("split").value("validation", cfg.ratios.validation);
  }
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return run_config_from_json(ss.str());
}

std::string config_digest(const RunConfig& cfg) {
  // the output location does not affect the computation
  RunConfig keyed = cfg;
  keyed.out_dir.clear();
  std::uint64_t h = hash_str(run_config_to_json(keyed));
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

Rng eval_rng(std::uint64_t seed, int epoch) {
  return Rng(seed).fork("eval-epoch-" + std::to_string(epoch));
}

std::vector<double> conditions_for(const std::vector<DatasetRecord>& records,
                                   const std::string& property_column) {
  std::vector<double> out;
  out.reserve(records.size());
  if (property_column.empty()) {
    PropertyOracle oracle = PropertyOracle::toy();
    for (const auto& r : records) out.push_back(oracle.value(r.smiles));
    return out;
  }
  for (const auto& r : records) {
    auto it = r.props.find(property_column);
    if (it == r.props.end())
      throw std::runtime_error("conditional mode: record \"" + r.smiles +
                               "\" lacks property column " + property_column);
    out.push_back(it->second);
  }
  return out;
}

std::string fmt_double(double x) {
  std::ostringstream os;
  os << std::setprecision(17) << x;
  return os.str();
}

DirLock::DirLock(const std::string& dir) {
  std::filesystem::create_directories(dir);
  path_ = dir + "/.lock";
  std::FILE* f = std::fopen(path_.c_str(), "wx");
  if (!f)
    throw std::runtime_error("output directory is locked by another run: " +
                             dir);
  std::fclose(f);
}

DirLock::~DirLock() { std::remove(path_.c_str()); }

MetricsRecord light_validation_metrics(
    const KaeModel& model, const std::set<std::string>& training,
    const std::vector<DatasetRecord>& validation,
    const std::string& property_column, int n_samples, int repeats, int beam,
    Rng& rng) {
  MetricsRecord rec;
  rec.sample_count = n_samples;
  rec.repeats = repeats;
  bool conditional = model.config().conditional;
  std::vector<double> zero_conds(static_cast<size_t>(n_samples), 0.0);
  for (int r = 0; r < repeats; ++r) {
    auto gen = sample_strings(model, training, n_samples, beam, rng,
                              conditional ? &zero_conds : nullptr);
    rec.novelty += novelty(gen, training);
    rec.uniqueness += uniqueness(gen);
    rec.validity += validity(gen);
  }
  rec.novelty /= repeats;
  rec.uniqueness /= repeats;
  rec.validity /= repeats;
  std::vector<double> val_conds;
  const std::vector<double>* cond_ptr = nullptr;
  if (conditional) {
    val_conds = conditions_for(validation, property_column);
    cond_ptr = &val_conds;
  }
  rec.reconstruction =
      reconstruction_rate(model, smiles_of(validation), cond_ptr);
  rec.nuv = rec.novelty * rec.uniqueness * rec.validity;
  rec.nuvr = rec.nuv * rec.reconstruction;
  return rec;
}

TrainResult train(const RunConfig& cfg_in, const DatasetSplit& data) {
  RunConfig cfg = cfg_in;
  cfg.validate();
  if (data.train.empty()) throw std::invalid_argument("train: empty split");
  DirLock lock(cfg.out_dir);

  std::vector<std::string> train_smiles = smiles_of(data.train);
  Vocabulary vocab = Vocabulary::build(train_smiles);
  cfg.model.vocab_size = vocab.size();

  std::vector<TokenSequence> train_tokens;
  int longest = 0;
  for (const auto& s : train_smiles) {
    train_tokens.push_back(tokenize(s, vocab));
    longest = std::max(longest, train_tokens.back().length);
  }
  for (const auto& r : data.validation)
    longest = std::max(longest, tokenize(r.smiles, vocab).length);
  for (const auto& r : data.test)
    longest = std::max(longest, tokenize(r.smiles, vocab).length);
  if (cfg.model.max_len == 0) cfg.model.max_len = longest;
  if (cfg.model.max_len < longest)
    throw std::invalid_argument("train: max_len below longest sequence");
  cfg.model.validate();

  std::string digest = config_digest(cfg);
  auto model = std::make_unique<KaeModel>(cfg.model, vocab,
                                          Rng(cfg.seed).fork("init"));
  auto optimizer = std::make_unique<Adam>(model->parameters(), cfg.adam);

  std::vector<double> train_conds;
  if (cfg.model.conditional)
    train_conds = conditions_for(data.train, cfg.property_column);

  std::ofstream log(cfg.out_dir + "/training_log.csv");
  std::ofstream metrics_csv(cfg.out_dir + "/validation_metrics.csv");
  if (!log || !metrics_csv)
    throw std::runtime_error("train: cannot write logs in " + cfg.out_dir);
  log << "# seed=" << cfg.seed << " config=" << digest << "\n";
  log << "epoch,step,total,wcel,latent,cel_noisy,cel_clean\n";
  metrics_csv << "# seed=" << cfg.seed << " config=" << digest << "\n";
  metrics_csv << "epoch,mean_total,novelty,uniqueness,validity,"
                 "reconstruction,nuv,nuvr\n";

  std::set<std::string> training_set(train_smiles.begin(), train_smiles.end());
  int n = static_cast<int>(train_tokens.size());
  int M = cfg.model.max_len;
  int D = cfg.model.latent_dim();
  TrainResult result;
  std::int64_t global_step = 0;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Rng order_rng = Rng(cfg.seed).fork("shuffle-epoch-" + std::to_string(epoch));
    std::vector<int> order(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
    for (int i = n; i > 1; --i)
      std::swap(order[static_cast<size_t>(i - 1)],
                order[static_cast<size_t>(order_rng.below(i))]);

    double total_sum = 0.0;
    int steps_this_epoch = 0;
    for (int start = 0; start < n; start += cfg.batch_size) {
      int b = std::min(cfg.batch_size, n - start);
      std::vector<TokenSequence> seqs;
      std::vector<double> conds;
      for (int i = 0; i < b; ++i) {
        int idx = order[static_cast<size_t>(start + i)];
        seqs.push_back(train_tokens[static_cast<size_t>(idx)]);
        if (cfg.model.conditional)
          conds.push_back(train_conds[static_cast<size_t>(idx)]);
      }
      PaddedBatch batch = pad_batch(seqs, M, vocab);

      Rng step_rng = Rng(cfg.seed).fork("train-epoch-" + std::to_string(epoch) +
                                        "-step-" + std::to_string(global_step));
      ForwardTrainOut fwd = model->forward_train(
          batch, cfg.model.conditional ? &conds : nullptr, step_rng,
          cfg.noise_scale);

      int S = M - 1;
      std::vector<int> labels(static_cast<size_t>(b) * S);
      Array label_mask({b, S});
      for (int r = 0; r < b; ++r)
        for (int s = 0; s < S; ++s) {
          labels[static_cast<size_t>(r) * S + s] =
              batch.ids[static_cast<size_t>(r) * M + s + 1];
          label_mask.data[static_cast<size_t>(r) * S + s] =
              batch.pad_mask.data[static_cast<size_t>(r) * M + s + 1];
        }

      TotalLossInputs in;
      in.logits_noisy = fwd.logits_noisy;
      in.logits_clean = fwd.logits_clean;
      in.labels = std::move(labels);
      in.pad_mask = std::move(label_mask);
      in.latents_flat = fwd.latents_flat;
      in.kl_mean = fwd.kl_mean;
      in.kl_sigma = fwd.kl_sigma;
      Rng mmd_rng = step_rng.fork("mmd-reference");
      Array gaussians({cfg.loss.gaussian_samples, D});
      mmd_rng.fill_gaussian(gaussians);
      in.gaussians = std::move(gaussians);

      LossReport report = total_loss(in, cfg.loss);
      double total = report.total.value().at(0);
      if (!std::isfinite(total))
        throw std::runtime_error(
            "train: non-finite loss at epoch " + std::to_string(epoch) +
            " step " + std::to_string(global_step) +
            " (wcel=" + fmt_double(report.wcel.value().at(0)) +
            ", latent=" + fmt_double(report.latent_term.value().at(0)) + ")");

      model->zero_grads();
      backward(report.total);
      optimizer->step();

      log << epoch << "," << global_step << "," << fmt_double(total) << ","
          << fmt_double(report.wcel.value().at(0)) << ","
          << fmt_double(report.latent_term.value().at(0)) << ","
          << fmt_double(report.cel_noisy.value().at(0)) << ","
          << fmt_double(report.cel_clean.value().at(0)) << "\n";
      total_sum += total;
      ++steps_this_epoch;
      ++global_step;
    }

    {
      std::ostringstream name;
      name << cfg.out_dir << "/epoch_" << std::setw(3) << std::setfill('0')
           << epoch << ".ckpt";
      save_checkpoint(name.str(), *model, optimizer.get(), cfg.seed, epoch);
      save_checkpoint(cfg.out_dir + "/latest.ckpt", *model, optimizer.get(),
                      cfg.seed, epoch);
    }

    EpochRecord er;
    er.epoch = epoch;
    er.mean_total = steps_this_epoch ? total_sum / steps_this_epoch : 0.0;
    if (cfg.eval_samples > 0) {
      Rng er_rng = eval_rng(cfg.seed, epoch);
      er.metrics = light_validation_metrics(
          *model, training_set, data.validation, cfg.property_column,
          cfg.eval_samples, cfg.eval_repeats, cfg.eval_beam, er_rng);
    }
    metrics_csv << epoch << "," << fmt_double(er.mean_total) << ","
                << fmt_double(er.metrics.novelty) << ","
                << fmt_double(er.metrics.uniqueness) << ","
                << fmt_double(er.metrics.validity) << ","
                << fmt_double(er.metrics.reconstruction) << ","
                << fmt_double(er.metrics.nuv) << ","
                << fmt_double(er.metrics.nuvr) << "\n";
    result.epochs.push_back(er);
  }

  result.model = std::move(model);
  result.optimizer = std::move(optimizer);
  return result;
}

}  // namespace kae
