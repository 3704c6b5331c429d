/* Copyright 2026 The PIFR Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/


#include "pifr/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>

#include "CLI11.hpp"
#include "pifr/dataio.hpp"
#include "pifr/dfa.hpp"
#include "pifr/error.hpp"
#include "pifr/eval.hpp"
#include "pifr/rsa.hpp"
#include "pifr/training.hpp"

namespace pifr {
namespace {

// Flag combinations rejected after parsing; reported like parse errors.
class UsageError : public Error {
 public:
  using Error::Error;
};

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// Short form for operating-point labels such as 0.1.
std::string format_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

std::size_t default_threads() {
  if (const char* env = std::getenv("PIFR_THREADS")) {
    try {
      const long v = std::stol(env);
      if (v >= 1) return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
    }
  }
  return 1;
}

template <typename Config>
void validate_flags(const Config& config) {
  try {
    config.validate();
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
}

struct GenFlags {
  std::string out;
  SynthConfig synth;
};

struct TrainFlags {
  std::string data;
  std::string out;
  std::string log;
  RsaConfig rsa;
  TrainConfig train;
  std::string level2 = "on";
};

// Options shared by match and eval.
struct MethodFlags {
  std::string ckpt;
  int p = 2;
  double lambda = 1.0;
  bool symmetric = false;
  bool rsa_only = false;
  std::string baseline;
};

struct MatchFlags {
  std::string probe;
  std::string gallery;
  MethodFlags method;
};

struct EvalFlags {
  std::string mode;
  std::string data;
  std::string csv;
  MethodFlags method;
  std::size_t threads = 1;
};

struct AuditFlags {
  std::string data;
  std::string ckpt;
  std::size_t trials = 20;
  std::uint64_t seed = 1;
  bool non_canonical = false;
  std::size_t threads = 1;
};

void add_method_flags(CLI::App* cmd, MethodFlags& f) {
  cmd->add_option("--ckpt", f.ckpt, "RSA checkpoint (identity RSA when omitted)")->check(CLI::ExistingFile);
  cmd->add_option("--p", f.p, "coding norm: 1 sparse, 2 collaborative")->check(CLI::IsMember({1, 2}));
  cmd->add_option("--lambda", f.lambda, "coding regularization")->check(CLI::NonNegativeNumber);
  cmd->add_flag("--symmetric", f.symmetric, "average both coding directions");
  cmd->add_flag("--rsa-only", f.rsa_only, "RSA then distance between set averages");
  cmd->add_option("--baseline", f.baseline, "bypass RSA and coding")->check(CLI::IsMember({"meanl2", "avepool"}));
}

MatcherConfig matcher_config(const MethodFlags& f, Reduction reduction = Reduction::kCanonical) {
  const int chosen = (f.symmetric ? 1 : 0) + (f.rsa_only ? 1 : 0) + (f.baseline.empty() ? 0 : 1);
  if (chosen > 1) throw UsageError("--symmetric, --rsa-only and --baseline are mutually exclusive");
  MatcherConfig config;
  config.coding.p = f.p;
  config.coding.lambda = f.lambda;
  config.coding.reduction = reduction;
  validate_flags(config.coding);
  if (f.baseline == "meanl2") config.method = Method::kMeanL2;
  else if (f.baseline == "avepool") config.method = Method::kAvePool;
  else if (f.rsa_only) config.method = Method::kRsaOnly;
  else if (f.symmetric) config.method = Method::kPifrSymmetric;
  else config.method = Method::kPifr;
  if (!f.ckpt.empty()) {
    Checkpoint ckpt = read_checkpoint(f.ckpt);
    config.rsa = ckpt.config;
    config.params = std::move(ckpt.params);
  }
  config.rsa.reduction = reduction;
  return config;
}

int cmd_gen(const GenFlags& f, std::ostream& out) {
  validate_flags(f.synth);
  const SyntheticData data = generate_synthetic_with_provenance(f.synth);
  write_container(data.sets, f.out);
  std::size_t elements = 0, duplicates = 0;
  for (const auto& flags : data.duplicate) {
    elements += flags.size();
    duplicates += static_cast<std::size_t>(std::count(flags.begin(), flags.end(), true));
  }
  out << "sets=" << data.sets.size() << "\n"
      << "identities=" << f.synth.identities << "\n"
      << "elements=" << elements << "\n"
      << "duplicates=" << duplicates << "\n"
      << "out=" << f.out << "\n";
  return kExitOk;
}

int cmd_train(TrainFlags f, std::ostream& out) {
  if (f.level2 != "on" && f.level2 != "off") throw UsageError("--level2 must be on or off");
  validate_flags(f.rsa);
  validate_flags(f.train);
  const std::vector<FeatureSet> sets = read_container(f.data);
  if (sets.empty()) throw Error("train: container holds no sets");
  const std::size_t dim = sets.front().front().d();
  const std::string log_path = f.log.empty() ? f.out + ".log" : f.log;
  std::ofstream log(log_path);
  if (!log) throw Error("train: cannot open log file " + log_path);

  RsaParams params = initialize_params(f.rsa, dim, f.train.seed);
  if (f.train.level1_epochs > 0) params = level1_pretrain(sets, params, f.rsa, f.train, &log).params;
  std::size_t failures = 0;
  if (f.level2 == "on") {
    BilevelResult result = bilevel_train(sets, params, f.rsa, f.train, nullptr, &log);
    params = std::move(result.params);
    failures = result.failures;
  } else {
    params = contrastive_pretrain(sets, params, f.rsa, f.train, &log).params;
  }
  write_checkpoint(params, f.rsa, f.out);
  out << "checkpoint=" << f.out << "\n"
      << "log=" << log_path << "\n"
      << "level2=" << f.level2 << "\n"
      << "solver_failures=" << failures << "\n";
  return kExitOk;
}

FeatureSet single_set(const std::string& path) {
  std::vector<FeatureSet> sets = read_container(path);
  if (sets.size() != 1) throw Error(path + ": expected exactly one set, found " + std::to_string(sets.size()));
  return std::move(sets.front());
}

int cmd_match(const MatchFlags& f, std::ostream& out) {
  const Matcher matcher(matcher_config(f.method));
  const FeatureSet probe = single_set(f.probe);
  const FeatureSet gallery = single_set(f.gallery);
  out << format_double(matcher.score(probe, gallery)) << "\n";
  return kExitOk;
}

struct MetricRow {
  std::string metric;
  std::string point;
  double value;
};

int cmd_eval(const EvalFlags& f, std::ostream& out) {
  const Matcher matcher(matcher_config(f.method));
  const std::vector<FeatureSet> sets = read_container(f.data);
  std::vector<MetricRow> rows;
  out << "mode=" << f.mode << "\n" << "method=" << to_string(matcher.config().method) << "\n"
      << "sets=" << sets.size() << "\n";
  if (f.mode == "verify") {
    const ScoreSet scores = verification_scores(sets, matcher, f.threads);
    out << "positives=" << scores.positives() << "\n" << "negatives=" << scores.negatives() << "\n";
    const std::vector<double> fars = {1e-3, 1e-2, 1e-1};
    const std::vector<double> tars = roc_tar_at_far(scores, fars);
    for (std::size_t i = 0; i < fars.size(); ++i) rows.push_back({"tar_at_far", format_label(fars[i]), tars[i]});
    rows.push_back({"auc", "", auc(scores)});
  } else {
    const IdentificationScores scores =
        f.mode == "identify-closed" ? closed_set_scores(sets, matcher, f.threads) : open_set_scores(sets, matcher, f.threads);
    std::size_t mated = 0;
    for (const ProbeSearch& probe : scores.probes) mated += probe.mate ? 1 : 0;
    out << "gallery=" << scores.gallery_size << "\n" << "mated_probes=" << mated << "\n"
        << "non_mated_probes=" << scores.probes.size() - mated << "\n";
    if (f.mode == "identify-closed") {
      for (std::size_t k : {1, 5, 10}) {
        if (k > scores.gallery_size) break;
        rows.push_back({"cmc", std::to_string(k), cmc_rank_k(scores, k)});
      }
    } else {
      const std::vector<double> fpirs = {1e-2, 1e-1};
      const std::vector<double> tpirs = tpir_at_fpir(scores, fpirs);
      for (std::size_t i = 0; i < fpirs.size(); ++i)
        rows.push_back({"tpir_at_fpir", format_label(fpirs[i]), tpirs[i]});
    }
  }
  for (const MetricRow& row : rows)
    out << row.metric << (row.point.empty() ? "" : "@" + row.point) << "=" << format_double(row.value) << "\n";
  if (!f.csv.empty()) {
    std::ofstream csv(f.csv);
    if (!csv) throw Error("eval: cannot open " + f.csv);
    csv << "metric,operating_point,value\n";
    for (const MetricRow& row : rows) csv << row.metric << "," << row.point << "," << format_double(row.value) << "\n";
    if (!csv) throw Error("eval: write failed for " + f.csv);
  }
  return kExitOk;
}

int cmd_audit(const AuditFlags& f, std::ostream& out, std::ostream& err) {
  MethodFlags method;
  method.ckpt = f.ckpt;
  const Reduction reduction = f.non_canonical ? Reduction::kInputOrder : Reduction::kCanonical;
  const Matcher matcher(matcher_config(method, reduction));
  const std::vector<FeatureSet> sets = read_container(f.data);

  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t i = 0; i < sets.size(); ++i)
    for (std::size_t j = i + 1; j < sets.size(); ++j) pairs.emplace_back(i, j);
  std::vector<double> deviation(pairs.size(), 0.0);
  parallel_for(pairs.size(), f.threads, [&](std::size_t k) {
    deviation[k] = permutation_invariance_audit(sets[pairs[k].first], sets[pairs[k].second], matcher, f.trials,
                                                f.seed + k);
  });
  const double worst = deviation.empty() ? 0.0 : *std::max_element(deviation.begin(), deviation.end());
  out << "pairs=" << pairs.size() << "\n" << "trials=" << f.trials << "\n"
      << "reduction=" << (f.non_canonical ? "input-order" : "canonical") << "\n"
      << "max_deviation=" << format_double(worst) << "\n";
  if (f.non_canonical) {
    err << "warning: input-order summation is not bit-exact; checking deviation <= 1e-9\n";
    return worst <= 1e-9 ? kExitOk : kExitRuntime;
  }
  return worst == 0.0 ? kExitOk : kExitRuntime;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Set-to-set matching with feature restructuring and dependency-guided alignment", "pifr"};
  app.require_subcommand(1);
  // -h would collide with the --h option of gen; subcommands inherit this.
  app.set_help_flag("--help", "print this help message and exit");
  app.option_defaults()->always_capture_default();
  const std::size_t threads = default_threads();

  GenFlags gen;
  CLI::App* gen_cmd = app.add_subcommand("gen", "write a synthetic feature-set container");
  gen_cmd->add_option("--out", gen.out, "output container")->required();
  gen_cmd->add_option("--ids", gen.synth.identities)->check(CLI::PositiveNumber);
  gen_cmd->add_option("--sets-per-id", gen.synth.sets_per_identity)->check(CLI::PositiveNumber);
  gen_cmd->add_option("--n", gen.synth.n_per_set, "elements per set")->check(CLI::PositiveNumber);
  gen_cmd->add_option("--h", gen.synth.h)->check(CLI::PositiveNumber);
  gen_cmd->add_option("--w", gen.synth.w)->check(CLI::PositiveNumber);
  gen_cmd->add_option("--d", gen.synth.d)->check(CLI::PositiveNumber);
  gen_cmd->add_option("--noise", gen.synth.noise_sigma)->check(CLI::NonNegativeNumber);
  gen_cmd->add_option("--redundancy", gen.synth.redundancy_rate, "fraction of redundant elements")
      ->check(CLI::Range(0.0, 1.0));
  gen_cmd->add_option("--redundancy-noise", gen.synth.redundancy_noise)->check(CLI::NonNegativeNumber);
  gen_cmd->add_option("--variation-gain", gen.synth.variation_gain)->check(CLI::NonNegativeNumber);
  gen_cmd->add_option("--variation-rank", gen.synth.variation_rank);
  gen_cmd->add_option("--seed", gen.synth.seed);

  TrainFlags train;
  train.train.threads = threads;
  CLI::App* train_cmd = app.add_subcommand("train", "train RSA parameters and write a checkpoint");
  train_cmd->add_option("--data", train.data)->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--out", train.out, "checkpoint path")->required();
  train_cmd->add_option("--log", train.log, "loss trace (default <out>.log)");
  train_cmd->add_option("--blocks", train.rsa.blocks);
  train_cmd->add_option("--sigma", train.rsa.sigma)->check(CLI::PositiveNumber);
  train_cmd->add_option("--embed-dim", train.rsa.embed_dim, "0 selects max(1, D/2)");
  train_cmd->add_option("--p", train.train.coding.p)->check(CLI::IsMember({1, 2}));
  train_cmd->add_option("--lambda", train.train.coding.lambda)->check(CLI::NonNegativeNumber);
  train_cmd->add_option("--lr", train.train.lr)->check(CLI::NonNegativeNumber);
  train_cmd->add_option("--level1-epochs", train.train.level1_epochs);
  train_cmd->add_option("--epochs", train.train.epochs);
  train_cmd->add_option("--pairs", train.train.pairs_per_epoch);
  train_cmd->add_option("--margin", train.train.margin)->check(CLI::PositiveNumber);
  train_cmd->add_option("--recon-clamp", train.train.recon_clamp)->check(CLI::PositiveNumber);
  train_cmd->add_option("--seed", train.train.seed);
  train_cmd->add_option("--level2", train.level2, "on, or off for the RSA-only model")
      ->check(CLI::IsMember({"on", "off"}));
  train_cmd->add_option("--threads", train.train.threads)->check(CLI::PositiveNumber);

  MatchFlags match;
  CLI::App* match_cmd = app.add_subcommand("match", "score one probe set against one gallery set");
  match_cmd->add_option("--probe", match.probe)->required()->check(CLI::ExistingFile);
  match_cmd->add_option("--gallery", match.gallery)->required()->check(CLI::ExistingFile);
  add_method_flags(match_cmd, match.method);

  EvalFlags eval;
  eval.threads = threads;
  CLI::App* eval_cmd = app.add_subcommand("eval", "run a verification or identification protocol");
  eval_cmd->add_option("--mode", eval.mode)->required()->check(CLI::IsMember({"verify", "identify-closed", "identify-open"}));
  eval_cmd->add_option("--data", eval.data)->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--csv", eval.csv, "metrics CSV (metric,operating_point,value)");
  eval_cmd->add_option("--threads", eval.threads)->check(CLI::PositiveNumber);
  add_method_flags(eval_cmd, eval.method);

  AuditFlags audit;
  audit.threads = threads;
  CLI::App* audit_cmd = app.add_subcommand("audit", "check score invariance under element shuffles");
  audit_cmd->add_option("--data", audit.data)->required()->check(CLI::ExistingFile);
  audit_cmd->add_option("--ckpt", audit.ckpt)->check(CLI::ExistingFile);
  audit_cmd->add_option("--trials", audit.trials);
  audit_cmd->add_option("--seed", audit.seed);
  audit_cmd->add_flag("--non-canonical", audit.non_canonical, "sum in input order (diagnostic)");
  audit_cmd->add_option("--threads", audit.threads)->check(CLI::PositiveNumber);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    const CLI::App* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    err << sub->help();
    return kExitUsage;
  }

  try {
    if (gen_cmd->parsed()) return cmd_gen(gen, out);
    if (train_cmd->parsed()) return cmd_train(train, out);
    if (match_cmd->parsed()) return cmd_match(match, out);
    if (eval_cmd->parsed()) return cmd_eval(eval, out);
    if (audit_cmd->parsed()) return cmd_audit(audit, out, err);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace pifr
