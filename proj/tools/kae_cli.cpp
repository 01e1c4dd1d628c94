#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "kae/checkpoint.hpp"
#include "kae/dataset.hpp"
#include "kae/experiments.hpp"
#include "kae/ses.hpp"
#include "kae/train.hpp"

using namespace kae;

namespace {

struct GlobalOpts {
  std::string config_path;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string out_dir = ".";
  std::string checkpoint;
};

int thread_count() {
  const char* env = std::getenv("KAE_THREADS");
  if (!env) return 1;
  int n = std::atoi(env);
  return n > 0 ? n : 1;
}

std::string digest_of(const std::string& text) {
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << hash_str(text);
  return os.str();
}

void write_header(std::ostream& os, std::uint64_t seed,
                  const std::string& digest_src) {
  os << "# seed=" << seed << " config=" << digest_of(digest_src) << "\n";
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

LoadedCheckpoint load_ck(const GlobalOpts& g) {
  if (g.checkpoint.empty())
    throw std::runtime_error("this subcommand needs --checkpoint");
  return load_checkpoint(g.checkpoint);
}

std::string phase_name(SESPhase p) {
  switch (p) {
    case SESPhase::ConditionSearch: return "condition-search";
    case SESPhase::Reposition: return "reposition";
    case SESPhase::PhaseTwo: return "phase-two";
  }
  return "?";
}

RunConfig effective_config(const GlobalOpts& g) {
  RunConfig cfg;
  if (!g.config_path.empty()) cfg = load_run_config(g.config_path);
  if (g.seed_set) cfg.seed = g.seed;
  if (g.out_dir != ".") cfg.out_dir = g.out_dir;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"kernel-elastic autoencoder for SMILES generation"};
  app.require_subcommand(1);
  (void)thread_count();  // evaluation is single-threaded; KAE_THREADS reserved

  GlobalOpts g;
  app.add_option("--config", g.config_path, "run config JSON file");
  app.add_option("--seed", g.seed, "random seed")
      ->each([&](const std::string&) { g.seed_set = true; });
  app.add_option("--out-dir", g.out_dir, "output directory");
  app.add_option("--checkpoint", g.checkpoint, "checkpoint file");

  // build-vocab
  auto* cmd_vocab = app.add_subcommand("build-vocab", "build vocabulary");
  std::string bv_input;
  cmd_vocab->add_option("--input", bv_input, "dataset file")->required();

  // train
  auto* cmd_train = app.add_subcommand("train", "train a model");

  // sample
  auto* cmd_sample = app.add_subcommand("sample", "sample molecules");
  int sp_n = 100, sp_beam = 1;
  std::optional<double> sp_cond;
  std::string sp_dataset;
  cmd_sample->add_option("--n", sp_n, "number of samples");
  cmd_sample->add_option("--beam", sp_beam, "beam width");
  cmd_sample->add_option("--condition", sp_cond, "condition value");
  cmd_sample->add_option("--dataset", sp_dataset, "training data for novelty");

  // reconstruct
  auto* cmd_rec = app.add_subcommand("reconstruct", "reconstruction report");
  std::string rc_input;
  cmd_rec->add_option("--input", rc_input, "file with one SMILES per line")
      ->required();

  // metrics
  auto* cmd_metrics = app.add_subcommand("metrics", "NUVR evaluation");
  std::string mt_dataset;
  int mt_n = 1000, mt_repeats = 1, mt_beam = 1;
  bool mt_match_epoch = false;
  cmd_metrics->add_option("--dataset", mt_dataset, "dataset file")->required();
  cmd_metrics->add_option("--n", mt_n, "samples per repeat");
  cmd_metrics->add_option("--repeats", mt_repeats, "evaluation repeats");
  cmd_metrics->add_option("--beam", mt_beam, "beam width");
  cmd_metrics->add_flag("--match-epoch", mt_match_epoch,
                        "reuse the trainer's per-epoch evaluation stream");

  // sweep
  auto* cmd_sweep = app.add_subcommand("sweep", "hyperparameter sweep");
  std::string sw_kind, sw_grid;
  int sw_extra = 1;
  cmd_sweep->add_option("--kind", sw_kind,
                        "lambda|delta|sigma|loss-type|beam-size")
      ->required();
  cmd_sweep->add_option("--grid", sw_grid, "comma-separated settings")
      ->required();
  cmd_sweep->add_option("--extra-epochs", sw_extra, "continued-training epochs");

  // correlate
  auto* cmd_corr = app.add_subcommand("correlate", "condition correlation");
  std::string co_dataset;
  int co_points = 10, co_n = 100, co_beam = 1;
  cmd_corr->add_option("--dataset", co_dataset, "dataset file")->required();
  cmd_corr->add_option("--points", co_points, "grid points");
  cmd_corr->add_option("--n-per-point", co_n, "samples per point");
  cmd_corr->add_option("--beam", co_beam, "beam width");

  // ses
  auto* cmd_ses = app.add_subcommand("ses", "similarity exhaustion search");
  std::string ss_targets;
  SESConfig ss_cfg;
  cmd_ses->add_option("--targets", ss_targets, "file of target SMILES")
      ->required();
  cmd_ses->add_option("--beam", ss_cfg.beam, "beam width");
  cmd_ses->add_option("--step", ss_cfg.step, "condition step");
  cmd_ses->add_option("--max-increase", ss_cfg.max_increase, "condition span");
  cmd_ses->add_option("--reps", ss_cfg.phase_two_reps, "phase-two repeats");
  cmd_ses->add_option("--reposition-iters", ss_cfg.reposition_iters,
                      "repositioning iterations");
  cmd_ses->add_option("--threshold", ss_cfg.similarity_threshold,
                      "Tanimoto threshold");

  // latent-pca
  auto* cmd_pca = app.add_subcommand("latent-pca", "latent projection");
  std::string pc_dataset;
  int pc_mols = 100, pc_gauss = 1000;
  cmd_pca->add_option("--dataset", pc_dataset, "dataset file")->required();
  cmd_pca->add_option("--n-molecules", pc_mols, "molecules to encode");
  cmd_pca->add_option("--n-gaussian", pc_gauss, "Gaussian reference samples");

  // baseline-search
  auto* cmd_base = app.add_subcommand("baseline-search", "SES baselines");
  std::string bs_mode = "dataset", bs_dataset, bs_targets;
  int bs_vectors = 100, bs_beam = 15;
  double bs_lo = -10.0, bs_hi = 10.0, bs_step = 0.1, bs_thresh = 0.4;
  cmd_base->add_option("--mode", bs_mode, "dataset|random");
  cmd_base->add_option("--dataset", bs_dataset, "dataset file");
  cmd_base->add_option("--targets", bs_targets, "file of target SMILES")
      ->required();
  cmd_base->add_option("--n-vectors", bs_vectors, "latents per grid point");
  cmd_base->add_option("--beam", bs_beam, "beam width");
  cmd_base->add_option("--cond-lo", bs_lo, "grid start");
  cmd_base->add_option("--cond-hi", bs_hi, "grid end");
  cmd_base->add_option("--cond-step", bs_step, "grid step");
  cmd_base->add_option("--threshold", bs_thresh, "Tanimoto threshold");

  CLI11_PARSE(app, argc, argv);

  try {
    if (cmd_vocab->parsed()) {
      auto records = load_records(bv_input, {});
      Vocabulary v = Vocabulary::build(smiles_of(records));
      DirLock lock(g.out_dir);
      std::ofstream out(g.out_dir + "/vocab.txt");
      out << v.chars() << "\n";
      std::cout << "vocabulary: " << v.size() << " tokens ("
                << v.chars().size() << " characters + SOS/EOS/PAD)\n";
      return 0;
    }

    if (cmd_train->parsed()) {
      RunConfig cfg = effective_config(g);
      if (cfg.dataset_path.empty())
        throw std::runtime_error("train: config must set dataset_path");
      std::vector<std::string> prop_cols;
      if (!cfg.property_column.empty()) prop_cols.push_back(cfg.property_column);
      DatasetSplit data =
          load_dataset(cfg.dataset_path, prop_cols, cfg.ratios, cfg.seed);
      TrainResult result = train(cfg, data);
      std::cout << "trained " << result.epochs.size() << " epochs; artifacts in "
                << cfg.out_dir << "\n";
      if (!result.epochs.empty()) {
        const auto& last = result.epochs.back();
        std::cout << "final mean loss " << fmt_double(last.mean_total)
                  << ", validity " << fmt_double(last.metrics.validity)
                  << ", reconstruction "
                  << fmt_double(last.metrics.reconstruction) << "\n";
      }
      return 0;
    }

    if (cmd_sample->parsed()) {
      LoadedCheckpoint ck = load_ck(g);
      std::uint64_t seed = g.seed_set ? g.seed : ck.seed;
      if (sp_cond && !ck.model->config().conditional)
        throw std::runtime_error("sample: condition given to unconditional model");
      std::set<std::string> training;
      if (!sp_dataset.empty())
        for (const auto& s : smiles_of(load_records(sp_dataset, {})))
          training.insert(s);
      std::vector<double> conds;
      const std::vector<double>* cond_ptr = nullptr;
      if (ck.model->config().conditional) {
        conds.assign(static_cast<size_t>(sp_n), sp_cond.value_or(0.0));
        cond_ptr = &conds;
      }
      Rng rng = Rng(seed).fork("sample");
      auto gen = sample_strings(*ck.model, training, sp_n, sp_beam, rng,
                                cond_ptr);
      DirLock lock(g.out_dir);
      std::ofstream out(g.out_dir + "/samples.csv");
      write_header(out, seed,
                   g.checkpoint + "|sample|" + std::to_string(sp_n) + "|" +
                       std::to_string(sp_beam));
      out << "index,smiles\n";
      for (size_t i = 0; i < gen.size(); ++i)
        out << i << "," << gen[i] << "\n";
      std::cout << "wrote " << gen.size() << " samples to " << g.out_dir
                << "/samples.csv\n";
      return 0;
    }

    if (cmd_rec->parsed()) {
      LoadedCheckpoint ck = load_ck(g);
      std::uint64_t seed = g.seed_set ? g.seed : ck.seed;
      auto inputs = read_lines(rc_input);
      std::vector<double> conds;
      const std::vector<double>* cond_ptr = nullptr;
      if (ck.model->config().conditional) {
        PropertyOracle oracle = PropertyOracle::toy();
        for (const auto& s : inputs) conds.push_back(oracle.value(s));
        cond_ptr = &conds;
      }
      ReconstructReport rep = reconstruct_report(*ck.model, inputs, cond_ptr);
      DirLock lock(g.out_dir);
      std::ofstream out(g.out_dir + "/reconstruct.csv");
      write_header(out, seed, g.checkpoint + "|reconstruct|" + rc_input);
      out << "smiles,decoded,match,skipped,reason\n";
      for (const auto& row : rep.rows)
        out << row.smiles << "," << row.decoded << "," << (row.match ? 1 : 0)
            << "," << (row.skipped ? 1 : 0) << "," << row.skip_reason << "\n";
      if (rep.rate_defined)
        std::cout << "reconstruction rate " << fmt_double(rep.rate) << " ("
                  << rep.matched << "/" << rep.attempted << ")\n";
      else
        std::cout << "reconstruction rate undefined (no usable inputs)\n";
      return 0;
    }

    if (cmd_metrics->parsed()) {
      LoadedCheckpoint ck = load_ck(g);
      std::uint64_t seed = g.seed_set ? g.seed : ck.seed;
      std::vector<std::string> prop_cols;
      DatasetSplit data = load_dataset(mt_dataset, prop_cols, SplitRatios{},
                                       ck.seed);
      std::set<std::string> training;
      for (const auto& r : data.train) training.insert(r.smiles);
      Rng rng = mt_match_epoch ? eval_rng(ck.seed, ck.epoch)
                               : Rng(seed).fork("metrics");
      MetricsRecord rec = light_validation_metrics(
          *ck.model, training, data.validation, "", mt_n, mt_repeats, mt_beam,
          rng);
      DirLock lock(g.out_dir);
      std::ofstream out(g.out_dir + "/metrics.csv");
      write_header(out, seed,
                   g.checkpoint + "|metrics|" + std::to_string(mt_n) + "|" +
                       std::to_string(mt_repeats) + "|" +
                       std::to_string(mt_beam));
      out << "novelty,uniqueness,validity,reconstruction,nuv,nuvr\n";
      out << fmt_double(rec.novelty) << "," << fmt_double(rec.uniqueness) << ","
          << fmt_double(rec.validity) << "," << fmt_double(rec.reconstruction)
          << "," << fmt_double(rec.nuv) << "," << fmt_double(rec.nuvr) << "\n";
      std::cout << "NUV " << fmt_double(rec.nuv) << ", NUVR "
                << fmt_double(rec.nuvr) << "\n";
      return 0;
    }

    if (cmd_sweep->parsed()) {
      RunConfig cfg = effective_config(g);
      if (cfg.dataset_path.empty())
        throw std::runtime_error("sweep: config must set dataset_path");
      std::vector<std::string> prop_cols;
      if (!cfg.property_column.empty()) prop_cols.push_back(cfg.property_column);
      DatasetSplit data =
          load_dataset(cfg.dataset_path, prop_cols, cfg.ratios, cfg.seed);
      std::vector<std::string> grid;
      std::stringstream gs(sw_grid);
      std::string item;
      while (std::getline(gs, item, ',')) grid.push_back(item);
      auto rows = sweep(sweep_kind_from_name(sw_kind), grid, cfg, data,
                        g.checkpoint, sw_extra);
      DirLock lock(cfg.out_dir);
      std::ofstream out(cfg.out_dir + "/sweep.csv");
      write_header(out, cfg.seed, run_config_to_json(cfg) + "|" + sw_kind + "|" +
                                      sw_grid);
      out << "setting,novelty,uniqueness,validity,reconstruction,nuv,nuvr\n";
      for (const auto& row : rows)
        out << row.setting << "," << fmt_double(row.metrics.novelty) << ","
            << fmt_double(row.metrics.uniqueness) << ","
            << fmt_double(row.metrics.validity) << ","
            << fmt_double(row.metrics.reconstruction) << ","
            << fmt_double(row.metrics.nuv) << ","
            << fmt_double(row.metrics.nuvr) << "\n";
      std::cout << "swept " << rows.size() << " settings\n";
      return 0;
    }

    if (cmd_corr->parsed()) {
      LoadedCheckpoint ck = load_ck(g);
      std::uint64_t seed = g.seed_set ? g.seed : ck.seed;
      DatasetSplit data = load_dataset(co_dataset, {}, SplitRatios{}, ck.seed);
      std::set<std::string> training;
      PropertyOracle oracle = PropertyOracle::toy();
      double lo = 1e300, hi = -1e300;
      for (const auto& r : data.train) {
        training.insert(r.smiles);
        double p = oracle.value(r.smiles);
        lo = std::min(lo, p);
        hi = std::max(hi, p);
      }
      std::vector<double> grid;
      for (int i = 0; i < co_points; ++i)
        grid.push_back(co_points == 1
                           ? lo
                           : lo + (hi - lo) * i / (co_points - 1));
      Rng rng = Rng(seed).fork("correlate");
      CorrelationResult res = correlation_experiment(
          *ck.model, oracle, grid, co_n, co_beam, training, rng);
      DirLock lock(g.out_dir);
      std::ofstream out(g.out_dir + "/correlation.csv");
      write_header(out, seed,
                   g.checkpoint + "|correlate|" + std::to_string(co_points) +
                       "|" + std::to_string(co_n));
      out << "condition,mean_property,valid_count\n";
      for (const auto& pt : res.points)
        out << fmt_double(pt.condition) << "," << fmt_double(pt.mean_property)
            << "," << pt.valid_count << "\n";
      if (res.r_defined)
        std::cout << "pearson r = " << fmt_double(res.r) << "\n";
      else
        std::cout << "pearson r undefined (degenerate grid)\n";
      return 0;
    }

    if (cmd_ses->parsed()) {
      LoadedCheckpoint ck = load_ck(g);
      std::uint64_t seed = g.seed_set ? g.seed : ck.seed;
      auto targets = read_lines(ss_targets);
      SimilarityExhaustionSearch ses(*ck.model, PropertyOracle::toy(), ss_cfg);
      DirLock lock(g.out_dir);
      std::ofstream out(g.out_dir + "/ses.csv");
      write_header(out, seed, g.checkpoint + "|ses|" + ss_targets);
      out << "target,best,property_before,property_after,improvement,"
             "similarity,phase,candidates_explored\n";
      int improved = 0;
      for (const auto& t : targets) {
        Rng rng = Rng(seed).fork("ses-" + t);
        SESResult res = ses.optimize(t, rng);
        out << res.target << ",";
        if (res.best) {
          ++improved;
          out << res.best->smiles << "," << fmt_double(res.original_property)
              << "," << fmt_double(res.best->property) << ","
              << fmt_double(res.best->property - res.original_property) << ","
              << fmt_double(res.best->similarity) << ","
              << phase_name(res.best->phase);
        } else {
          out << "," << fmt_double(res.original_property) << ",,,,";
        }
        out << "," << res.candidates_explored << "\n";
      }
      std::cout << "improved " << improved << "/" << targets.size()
                << " targets\n";
      return 0;
    }

    if (cmd_pca->parsed()) {
      LoadedCheckpoint ck = load_ck(g);
      std::uint64_t seed = g.seed_set ? g.seed : ck.seed;
      DatasetSplit data = load_dataset(pc_dataset, {}, SplitRatios{}, ck.seed);
      std::vector<std::string> mols = smiles_of(data.train);
      if (static_cast<int>(mols.size()) > pc_mols)
        mols.resize(static_cast<size_t>(pc_mols));
      std::vector<double> conds;
      const std::vector<double>* cond_ptr = nullptr;
      if (ck.model->config().conditional) {
        PropertyOracle oracle = PropertyOracle::toy();
        for (const auto& s : mols) conds.push_back(oracle.value(s));
        cond_ptr = &conds;
      }
      Rng rng = Rng(seed).fork("latent-pca");
      PcaResult res = latent_pca(*ck.model, mols, cond_ptr, pc_gauss, rng);
      DirLock lock(g.out_dir);
      std::ofstream out(g.out_dir + "/latent_pca.csv");
      write_header(out, seed,
                   g.checkpoint + "|latent-pca|" + std::to_string(pc_gauss));
      out << "kind,pc1,pc2\n";
      for (const auto& row : res.rows)
        out << row.kind << "," << fmt_double(row.x) << "," << fmt_double(row.y)
            << "\n";
      std::cout << "eigenvalues " << fmt_double(res.eig1) << ", "
                << fmt_double(res.eig2) << "; mean mahalanobis encoded "
                << fmt_double(res.mean_mahalanobis_encoded) << ", noisy "
                << fmt_double(res.mean_mahalanobis_noisy) << "\n";
      return 0;
    }

    if (cmd_base->parsed()) {
      std::uint64_t seed = g.seed;
      auto targets = read_lines(bs_targets);
      PropertyOracle oracle = PropertyOracle::toy();
      DirLock lock(g.out_dir);
      std::ofstream out(g.out_dir + "/baseline.csv");
      if (bs_mode == "dataset") {
        if (bs_dataset.empty())
          throw std::runtime_error("baseline-search: dataset mode needs --dataset");
        auto pool = smiles_of(load_records(bs_dataset, {}));
        write_header(out, seed, "baseline|dataset|" + bs_dataset);
        out << "target,best,property_before,property_after,similarity,"
               "candidates_explored\n";
        for (const auto& t : targets) {
          SESResult res = dataset_search_baseline(t, oracle, pool, bs_thresh);
          out << res.target << "," << (res.best ? res.best->smiles : "") << ","
              << fmt_double(res.original_property) << ","
              << (res.best ? fmt_double(res.best->property) : "") << ","
              << (res.best ? fmt_double(res.best->similarity) : "") << ","
              << res.candidates_explored << "\n";
        }
      } else if (bs_mode == "random") {
        LoadedCheckpoint ck = load_ck(g);
        if (!g.seed_set) seed = ck.seed;
        write_header(out, seed, g.checkpoint + "|baseline|random");
        out << "target,smiles,property,similarity\n";
        for (const auto& t : targets) {
          Rng rng = Rng(seed).fork("baseline-random-" + t);
          auto found = random_search_baseline(*ck.model, oracle, bs_vectors,
                                              bs_lo, bs_hi, bs_step, bs_beam, t,
                                              bs_thresh, rng);
          for (const auto& c : found)
            out << t << "," << c.smiles << "," << fmt_double(c.property) << ","
                << fmt_double(c.similarity) << "\n";
        }
      } else {
        throw std::runtime_error("baseline-search: mode must be dataset|random");
      }
      std::cout << "wrote " << g.out_dir << "/baseline.csv\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
