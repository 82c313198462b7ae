#include "cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "satomil/baselines.hpp"
#include "satomil/checkpoint.hpp"
#include "satomil/datagen.hpp"
#include "satomil/error.hpp"
#include "satomil/metrics.hpp"
#include "satomil/ordinal.hpp"
#include "satomil/sat_model.hpp"
#include "satomil/trainer.hpp"

namespace satomil::cli {

namespace {

struct ModelFlags {
  std::string kind = "sat";
  std::size_t model_dim = SatConfig{}.model_dim;
  std::size_t embed_hidden = SatConfig{}.embed_hidden;
  std::size_t mlp_hidden = SatConfig{}.mlp_hidden;
  int blocks = SatConfig{}.blocks;
  std::string mask = "strict";
  bool no_residual = false;
  std::uint64_t seed = 0;

  void add(CLI::App* app, bool with_kind = true) {
    if (with_kind) {
      app->add_option("--model", kind, "model kind")
          ->check(CLI::IsMember({"sat", "output-mean", "output-max", "feature-mean",
                                 "feature-max", "gated-attention", "transformer",
                                 "transformer-krank", "instance-max"}));
    }
    app->add_option("--model-dim", model_dim, "attention/feature dimension d");
    app->add_option("--embed-hidden", embed_hidden, "embedder hidden width");
    app->add_option("--mlp-hidden", mlp_hidden, "block MLP hidden width");
    app->add_option("--blocks", blocks, "number of aggregation blocks");
    app->add_option("--mask", mask, "token mask semantics")->check(CLI::IsMember({"strict", "literal"}));
    app->add_flag("--no-residual", no_residual, "drop residual connections in the block");
    app->add_option("--model-seed", seed, "parameter initialization seed");
  }

  SatConfig config(int k, std::size_t input_dim) const {
    SatConfig c;
    c.k_classes = k;
    c.input_dim = input_dim;
    c.model_dim = model_dim;
    c.embed_hidden = embed_hidden;
    c.mlp_hidden = mlp_hidden;
    c.blocks = blocks;
    c.mask_mode = parse_mask_mode(mask);
    c.residual = !no_residual;
    c.seed = seed;
    return c;
  }
};

struct TrainFlags {
  std::string preset;
  double lr = 1e-3;
  int epochs = 300;
  std::size_t batch = 32;
  int patience = 50;
  std::uint64_t seed = 0;

  void add(CLI::App* app) {
    app->add_option("--preset", preset, "hyperparameter preset")->check(CLI::IsMember({"paper-limuc"}));
    app->add_option("--lr", lr, "Adam learning rate");
    app->add_option("--epochs", epochs, "maximum epochs");
    app->add_option("--batch", batch, "bags per mini-batch");
    app->add_option("--patience", patience, "early-stopping patience in epochs");
    app->add_option("--seed", seed, "training seed (shuffling, oversampling, splits)");
  }

  TrainConfig config(CLI::App* app, ModelKind kind) const {
    TrainConfig c = preset == "paper-limuc" ? TrainConfig::paper_limuc() : TrainConfig{};
    // explicit flags override the preset
    if (preset.empty() || app->count("--lr")) c.learning_rate = lr;
    if (preset.empty() || app->count("--epochs")) c.epochs = epochs;
    if (preset.empty() || app->count("--batch")) c.batch_size = batch;
    if (preset.empty() || app->count("--patience")) c.patience = patience;
    // a short --epochs run without an explicit --patience just runs out
    if (!app->count("--patience")) c.patience = std::min(c.patience, c.epochs);
    c.seed = seed;
    c.objective = kind;
    return c;
  }
};

nlohmann::json argv_json(int argc, const char* const* argv) {
  nlohmann::json a = nlohmann::json::array();
  for (int i = 0; i < argc; ++i) a.push_back(argv[i]);
  return a;
}

std::string fmt_metric(const MetricSummary& s) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3f +- %.3f", s.mean, s.std);
  return buf;
}

void check_compatible(const BagModel& model, const Dataset& data) {
  if (model.config().k_classes != data.k_classes) {
    throw ContractError("checkpoint has K=" + std::to_string(model.config().k_classes) +
                        " but dataset has K=" + std::to_string(data.k_classes));
  }
  if (model.config().input_dim != data.input_dim) {
    throw ContractError("checkpoint expects input_dim=" + std::to_string(model.config().input_dim) +
                        " but dataset has input_dim=" + std::to_string(data.input_dim));
  }
}

nlohmann::json matrix_json(const ad::Tensor& t) {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t i = 0; i < t.rows(); ++i) {
    const auto r = t.row_span(i);
    rows.push_back(std::vector<double>(r.begin(), r.end()));
  }
  return rows;
}

// Attention record for any model that exposes instance attention.
AttentionRecord attention_of(const BagModel& model, const Bag& bag) {
  if (const auto* sat = dynamic_cast<const SatModel*>(&model)) return sat->attention(bag);
  if (const auto* tok = dynamic_cast<const SingleTokenModel*>(&model)) {
    return {bag.id, tok->attention(bag.matrix()), ad::Tensor(1, 1)};
  }
  if (const auto* gated = dynamic_cast<const GatedAttentionModel*>(&model)) {
    return {bag.id, gated->attention(bag.matrix()), ad::Tensor(1, 1)};
  }
  throw ContractError("model kind '" + std::string(to_string(model.kind())) +
                      "' has no attention to dump");
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Selective aggregated transformer for ordinal multiple-instance learning"};
  app.require_subcommand(1);
  const nlohmann::json command_line = argv_json(argc, argv);

  // gen
  GenSpec gen;
  std::string gen_out, low_dist = "geometric";
  CLI::App* gen_cmd = app.add_subcommand("gen", "generate a synthetic dataset");
  gen_cmd->add_option("--k", gen.k_classes, "number of ordinal classes");
  gen_cmd->add_option("--dim", gen.input_dim, "instance dimension");
  gen_cmd->add_option("--sep", gen.class_sep, "distance between adjacent class means");
  gen_cmd->add_option("--sigma", gen.noise_sigma, "instance noise standard deviation");
  gen_cmd->add_option("--bag-min", gen.bag_size_min, "smallest bag size");
  gen_cmd->add_option("--bag-max", gen.bag_size_max, "largest bag size");
  gen_cmd->add_option("--low-dist", low_dist, "distribution of non-forced instance classes")
      ->check(CLI::IsMember({"uniform", "geometric"}));
  gen_cmd->add_option("--rho", gen.geometric_rho, "geometric ratio");
  gen_cmd->add_option("--bags-per-class", gen.bags_per_class, "bags generated per label");
  gen_cmd->add_option("--seed", gen.seed, "generator seed");
  gen_cmd->add_option("--out", gen_out, "output dataset path")->required();

  // train
  ModelFlags train_model;
  TrainFlags train_flags;
  std::string train_data, train_ckpt, train_history;
  CLI::App* train_cmd = app.add_subcommand("train", "train one model and write a checkpoint");
  train_cmd->add_option("--data", train_data, "dataset path")->required();
  train_cmd->add_option("--out", train_ckpt, "checkpoint path")->required();
  train_cmd->add_option("--history", train_history, "per-epoch history (JSON Lines)");
  train_model.add(train_cmd);
  train_flags.add(train_cmd);

  // eval
  std::string eval_ckpt, eval_data;
  CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
  eval_cmd->add_option("--ckpt", eval_ckpt, "checkpoint path")->required();
  eval_cmd->add_option("--data", eval_data, "dataset path")->required();

  // cv
  ModelFlags cv_model;
  TrainFlags cv_flags;
  std::string cv_data;
  std::size_t cv_folds = 5;
  unsigned cv_workers = 1;
  CLI::App* cv_cmd = app.add_subcommand("cv", "stratified k-fold cross-validation");
  cv_cmd->add_option("--data", cv_data, "dataset path")->required();
  cv_cmd->add_option("--folds", cv_folds, "number of folds");
  cv_cmd->add_option("--workers", cv_workers, "folds trained concurrently");
  cv_model.add(cv_cmd);
  cv_flags.add(cv_cmd);

  // attn
  std::string attn_ckpt, attn_data, attn_out, attn_features;
  bool attn_samples = false;
  CLI::App* attn_cmd = app.add_subcommand("attn", "dump attention records and selectivity");
  attn_cmd->add_option("--ckpt", attn_ckpt, "checkpoint path")->required();
  attn_cmd->add_option("--data", attn_data, "dataset path")->required();
  attn_cmd->add_option("--out", attn_out, "attention records (JSON Lines)");
  attn_cmd->add_option("--features", attn_features, "bag-level features (JSON Lines, SAT only)");
  attn_cmd->add_flag("--samples", attn_samples, "include per-instance samples in the summary");

  // gradcheck
  int gc_k = 3;
  std::size_t gc_dim = 4, gc_bag = 3;
  std::uint64_t gc_seed = 1;
  std::string gc_mask = "strict";
  int gc_blocks = 1;
  bool gc_no_residual = false;
  CLI::App* gc_cmd = app.add_subcommand("gradcheck", "finite-difference check of the full SAT loss");
  gc_cmd->add_option("--k", gc_k, "number of classes");
  gc_cmd->add_option("--dim", gc_dim, "model and input dimension");
  gc_cmd->add_option("--bag-size", gc_bag, "instances in the random bag");
  gc_cmd->add_option("--seed", gc_seed, "seed for params and bag");
  gc_cmd->add_option("--mask", gc_mask, "token mask semantics")->check(CLI::IsMember({"strict", "literal"}));
  gc_cmd->add_option("--blocks", gc_blocks, "number of aggregation blocks");
  gc_cmd->add_flag("--no-residual", gc_no_residual, "drop residual connections");

  // bench
  ModelFlags bench_model;
  TrainFlags bench_flags;
  std::string bench_data, bench_json, bench_models;
  std::size_t bench_folds = 5;
  unsigned bench_workers = 1;
  std::size_t bench_bags_per_class = 50;
  std::uint64_t bench_gen_seed = 0;
  CLI::App* bench_cmd = app.add_subcommand("bench", "cross-validate the baseline zoo and the SAT");
  bench_cmd->add_option("--data", bench_data, "dataset path (default: generate one)");
  bench_cmd->add_option("--bags-per-class", bench_bags_per_class, "bags per label when generating");
  bench_cmd->add_option("--gen-seed", bench_gen_seed, "generator seed when generating");
  bench_cmd->add_option("--models", bench_models, "comma-separated model kinds (default: all)");
  bench_cmd->add_option("--folds", bench_folds, "number of folds");
  bench_cmd->add_option("--workers", bench_workers, "folds trained concurrently");
  bench_cmd->add_option("--json", bench_json, "also write the results as JSON");
  bench_model.add(bench_cmd, false);
  bench_flags.add(bench_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << "run with --help for usage\n";
    return 1;
  }

  try {
    if (*gen_cmd) {
      gen.low_class_dist = low_dist == "uniform" ? LowClassDist::Uniform : LowClassDist::Geometric;
      const Dataset data = generate(gen);
      nlohmann::json echo = to_json(gen);
      echo["command_line"] = command_line;
      write_dataset(std::filesystem::path(gen_out), data, echo);
      err << "wrote " << data.size() << " bags to " << gen_out << "\n";
      out << nlohmann::json{{"dataset", gen_out}, {"bags", data.size()}, {"generator", echo}}.dump()
          << "\n";
      return 0;
    }

    if (*train_cmd) {
      const Dataset data = read_dataset(std::filesystem::path(train_data));
      const ModelKind kind = parse_model_kind(train_model.kind);
      const SatConfig mc = train_model.config(data.k_classes, data.input_dim);
      const TrainConfig tc = train_flags.config(train_cmd, kind);
      const TrainResult r = train_with_validation_split(data, mc, tc, [&err](const EpochRecord& e) {
        if (e.epoch % 10 == 0) {
          err << "epoch " << e.epoch << " loss " << e.train_loss << " val_qwk " << e.val_qwk << "\n";
        }
      });
      const nlohmann::json run = {{"train", to_json(tc)}, {"command_line", command_line}};
      save_checkpoint(train_ckpt, *r.model, run);
      if (!train_history.empty()) write_history(std::filesystem::path(train_history), r.history);
      out << nlohmann::json{{"checkpoint", train_ckpt},
                            {"best_epoch", r.best_epoch},
                            {"best_val_qwk", r.best_val_qwk},
                            {"epochs_run", r.history.size()},
                            {"run", run}}
                 .dump()
          << "\n";
      return 0;
    }

    if (*eval_cmd) {
      const auto model = load_checkpoint(eval_ckpt);
      const Dataset data = read_dataset(std::filesystem::path(eval_data));
      check_compatible(*model, data);
      nlohmann::json j = metrics::to_json(evaluate(*model, data));
      j["model"] = to_string(model->kind());
      j["command_line"] = command_line;
      out << j.dump() << "\n";
      return 0;
    }

    if (*cv_cmd) {
      const Dataset data = read_dataset(std::filesystem::path(cv_data));
      const ModelKind kind = parse_model_kind(cv_model.kind);
      const TrainConfig tc = cv_flags.config(cv_cmd, kind);
      const CvResult r = cross_validate(data, cv_folds, cv_model.config(data.k_classes, data.input_dim),
                                        tc, cv_workers);
      nlohmann::json j = to_json(r);
      j["model"] = to_string(kind);
      j["train"] = to_json(tc);
      j["command_line"] = command_line;
      out << j.dump() << "\n";
      return 0;
    }

    if (*attn_cmd) {
      const auto model = load_checkpoint(attn_ckpt);
      const Dataset data = read_dataset(std::filesystem::path(attn_data));
      check_compatible(*model, data);
      std::ofstream records_out, features_out;
      if (!attn_out.empty()) {
        records_out.open(attn_out);
        if (!records_out) throw std::runtime_error("cannot write " + attn_out);
      }
      const auto* sat = dynamic_cast<const SatModel*>(model.get());
      if (!attn_features.empty()) {
        if (sat == nullptr) throw ContractError("--features needs a SAT checkpoint");
        features_out.open(attn_features);
        if (!features_out) throw std::runtime_error("cannot write " + attn_features);
      }

      std::vector<AttentionRecord> records;
      std::vector<std::vector<int>> labels;
      for (const Bag& b : data.bags) {
        AttentionRecord rec = attention_of(*model, b);
        if (records_out.is_open()) {
          nlohmann::json line = {{"bag_id", b.id},
                                 {"label", b.label},
                                 {"instance_weights", matrix_json(rec.instance_weights)}};
          if (sat != nullptr) line["token_weights"] = matrix_json(rec.token_weights);
          if (b.instance_labels) line["instance_labels"] = *b.instance_labels;
          records_out << line.dump() << "\n";
        }
        if (features_out.is_open()) {
          ad::Tape tape(false);
          const SatForward f = sat->forward_full(tape, b);
          features_out << nlohmann::json{{"bag_id", b.id},
                                         {"label", b.label},
                                         {"predicted", ordinal::decode_logits(f.rank_logits.value().data())},
                                         {"features", matrix_json(f.bag_features.value())}}
                              .dump()
                       << "\n";
        }
        if (b.instance_labels) {
          records.push_back(std::move(rec));
          labels.push_back(*b.instance_labels);
        }
      }
      nlohmann::json j = {{"model", to_string(model->kind())}, {"command_line", command_line}};
      if (!records.empty()) {
        j["selectivity"] = metrics::to_json(metrics::attention_selectivity(records, labels), attn_samples);
      } else {
        err << "dataset has no instance labels; selectivity not computed\n";
      }
      out << j.dump() << "\n";
      return 0;
    }

    if (*gc_cmd) {
      SatConfig c;
      c.k_classes = gc_k;
      c.input_dim = gc_dim;
      c.model_dim = gc_dim;
      c.embed_hidden = gc_dim;
      c.mlp_hidden = gc_dim;
      c.blocks = gc_blocks;
      c.mask_mode = parse_mask_mode(gc_mask);
      c.residual = !gc_no_residual;
      c.seed = gc_seed;
      SatModel model(c);
      // zero heads would hide every gradient behind them
      Rng rng(gc_seed + 17);
      std::uniform_real_distribution<double> u(-1.0, 1.0);
      for (double& v : model.params().head_weight.value.data()) v = u(rng);
      for (double& v : model.params().head_bias.value.data()) v = u(rng);
      Bag bag;
      bag.id = "gradcheck";
      bag.label = 1 + static_cast<int>(rng() % static_cast<std::uint64_t>(gc_k));
      for (std::size_t i = 0; i < gc_bag; ++i) {
        std::vector<double> x(gc_dim);
        for (double& v : x) v = u(rng);
        bag.instances.push_back(std::move(x));
      }
      const auto start = std::chrono::steady_clock::now();
      const double worst = ad::grad_check([&](ad::Tape& t) { return model.loss(t, bag); },
                                          model.parameters(), 1e-5);
      const double secs =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      std::size_t entries = 0;
      for (const auto* p : model.parameters()) entries += p->value.size();
      const bool ok = worst < 1e-4;
      out << nlohmann::json{{"max_relative_error", worst},
                            {"threshold", 1e-4},
                            {"pass", ok},
                            {"parameters", entries},
                            {"seconds", secs},
                            {"config", to_json(c)},
                            {"command_line", command_line}}
                 .dump()
          << "\n";
      return ok ? 0 : 2;
    }

    if (*bench_cmd) {
      Dataset data;
      if (!bench_data.empty()) {
        data = read_dataset(std::filesystem::path(bench_data));
      } else {
        GenSpec spec;
        spec.bags_per_class = bench_bags_per_class;
        spec.seed = bench_gen_seed;
        data = generate(spec);
      }
      std::vector<ModelKind> kinds;
      if (bench_models.empty()) {
        kinds = all_model_kinds();
      } else {
        std::stringstream ss(bench_models);
        std::string tok;
        while (std::getline(ss, tok, ',')) kinds.push_back(parse_model_kind(tok));
      }
      const SatConfig mc = bench_model.config(data.k_classes, data.input_dim);
      nlohmann::json results = nlohmann::json::array();
      std::ostringstream table;
      char line[160];
      std::snprintf(line, sizeof line, "%-26s %-16s %-16s %-16s\n", "Method", "Accuracy", "Kappa",
                    "Macro-f1");
      table << line;
      for (ModelKind kind : kinds) {
        err << "bench: " << display_name(kind) << "\n";
        const TrainConfig tc = bench_flags.config(bench_cmd, kind);
        const CvResult r = cross_validate(data, bench_folds, mc, tc, bench_workers);
        std::snprintf(line, sizeof line, "%-26s %-16s %-16s %-16s\n",
                      std::string(display_name(kind)).c_str(), fmt_metric(r.accuracy).c_str(),
                      fmt_metric(r.qwk).c_str(), fmt_metric(r.macro_f1).c_str());
        table << line;
        nlohmann::json j = to_json(r);
        j["model"] = to_string(kind);
        results.push_back(std::move(j));
      }
      out << table.str();
      if (!bench_json.empty()) {
        std::ofstream jf(bench_json);
        jf << nlohmann::json{{"results", results},
                             {"model_config", to_json(mc)},
                             {"command_line", command_line}}
                  .dump(2)
           << "\n";
      }
      return 0;
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

}  // namespace satomil::cli
