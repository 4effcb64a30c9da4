#pragma once

// Command-line front end. Exit codes: 0 success, 1 usage error, 2 runtime failure.

#include <CLI11.hpp>
#include <json.hpp>

#include <atomic>
#include <filesystem>
#include <iostream>
#include <optional>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include "mmsr/checkpoint.hpp"
#include "mmsr/degrade/recipe.hpp"
#include "mmsr/eval.hpp"
#include "mmsr/image_io.hpp"
#include "mmsr/service.hpp"
#include "mmsr/synth.hpp"
#include "mmsr/trainer.hpp"

namespace mmsr::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

/// Raised for bad option values discovered after parsing.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// JSON, or `dotted.key = value` lines where each value is read as a JSON
/// literal when possible and as a string otherwise. '#' starts a comment.
inline nlohmann::json parse_config_text(const std::string& text) {
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{') return nlohmann::json::parse(text);
  nlohmann::json out = nlohmann::json::object();
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return std::string();
    return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (auto h = line.find('#'); h != std::string::npos) line.resize(h);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("config line " + std::to_string(lineno) + ": expected key = value");
    const auto key = trim(line.substr(0, eq));
    const auto raw = trim(line.substr(eq + 1));
    if (key.empty()) throw std::invalid_argument("config line " + std::to_string(lineno) + ": empty key");
    nlohmann::json value = nlohmann::json::parse(raw, nullptr, false);
    if (value.is_discarded()) value = raw;
    out[nlohmann::json::json_pointer("/" + std::regex_replace(key, std::regex("\\."), "/"))] = value;
  }
  return out;
}

inline nlohmann::json load_config_file(const std::string& path) { return parse_config_text(slurp(path)); }

inline nets::ScorePair parse_score_pair(const std::string& s) {
  const auto comma = s.find(',');
  if (comma == std::string::npos) throw UsageError("scores must look like s_n,s_b");
  try {
    std::size_t a = 0, b = 0;
    const std::string l = s.substr(0, comma), r = s.substr(comma + 1);
    nets::ScorePair p{std::stod(l, &a), std::stod(r, &b)};
    if (a != l.size() || b != r.size()) throw std::invalid_argument("trailing characters");
    if (!p.finite()) throw UsageError("scores must be finite");
    return p;
  } catch (const std::logic_error&) {
    throw UsageError("scores must look like s_n,s_b (got '" + s + "')");
  }
}

inline std::vector<double> parse_levels(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t n = 0;
      out.push_back(std::stod(item, &n));
      if (n != item.size()) throw std::invalid_argument("x");
    } catch (const std::logic_error&) {
      throw UsageError("bad level '" + item + "'");
    }
  }
  if (out.empty()) throw UsageError("no levels given");
  return out;
}

inline std::string json_line(const nets::ScorePair& s) {
  return nlohmann::json{{"s_n", s.s_n}, {"s_b", s.s_b}}.dump();
}

/// Evaluation images: decoded from files when given, procedural otherwise.
inline std::vector<Image> eval_images(const std::vector<std::string>& files, std::size_t count, std::size_t size, std::uint64_t seed) {
  if (!files.empty()) {
    std::vector<Image> out;
    for (const auto& f : files) out.push_back(read_image(f));
    return out;
  }
  return synth::image_set(seed, count, size, size);
}

inline int cli_main(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"mmsr: degradation synthesis, score estimation and modulated x4 restoration"};
  app.require_subcommand(1);
  app.fallthrough(false);

  // degrade
  std::string d_in, d_out, d_cfg, d_recipe_in, d_recipe_out;
  std::uint64_t d_seed = 0;
  auto* degrade = app.add_subcommand("degrade", "Apply a sampled (or given) degradation recipe to an HR image");
  degrade->add_option("-i,--input", d_in, "HR image (PNG or PPM)")->required();
  degrade->add_option("-o,--output", d_out, "Degraded image path")->required();
  degrade->add_option("-c,--config", d_cfg, "Degradation config (JSON or key = value)");
  degrade->add_option("--recipe", d_recipe_in, "Replay this recipe instead of sampling one");
  degrade->add_option("--recipe-out", d_recipe_out, "Recipe sidecar path (default: <output>.recipe.json)");
  degrade->add_option("--seed", d_seed, "Sampling seed");

  // train
  std::string t_cfg, t_resume, t_out;
  std::optional<std::uint64_t> t_seed;
  std::uint64_t t_max = 0;
  bool t_quiet = false;
  auto* train = app.add_subcommand("train", "Train UDEM, condition network and generator");
  train->add_option("-c,--config", t_cfg, "Training config (JSON or key = value)");
  train->add_option("--resume", t_resume, "Checkpoint to resume from; its stored config is used");
  train->add_option("-o,--out-dir", t_out, "Directory for train_log.jsonl and checkpoints")->required();
  train->add_option("--seed", t_seed, "Override the config seed (fresh runs only)");
  train->add_option("--max-iters", t_max, "Stop after this many total iterations");
  train->add_flag("-q,--quiet", t_quiet, "Do not echo log records");

  // score
  std::string s_ckpt, s_img;
  auto* score = app.add_subcommand("score", "Print clamped degradation scores for an LR image");
  score->add_option("--checkpoint", s_ckpt)->required();
  score->add_option("-i,--image", s_img)->required();

  // restore
  std::string r_ckpt, r_img, r_out, r_scores;
  auto* restore = app.add_subcommand("restore", "x4 restoration at estimated or given scores");
  restore->add_option("--checkpoint", r_ckpt)->required();
  restore->add_option("-i,--image", r_img)->required();
  restore->add_option("-o,--output", r_out)->required();
  restore->add_option("--scores", r_scores, "s_n,s_b (default: estimated)");

  // sweep
  std::string w_ckpt, w_kind = "all", w_out = ".";
  std::vector<std::string> w_files;
  std::size_t w_count = 16, w_size = 128;
  std::uint64_t w_seed = 20240;
  auto* sweep = app.add_subcommand("sweep", "Score single-degradation sweeps");
  sweep->add_option("--checkpoint", w_ckpt)->required();
  sweep->add_option("-k,--kind", w_kind, "gaussian-noise | gaussian-blur | jpeg | all");
  sweep->add_option("-o,--out-dir", w_out);
  sweep->add_option("--inputs", w_files, "HR images (default: procedural set)");
  sweep->add_option("--count", w_count, "Procedural image count");
  sweep->add_option("--size", w_size, "Procedural image side (HR)");
  sweep->add_option("--seed", w_seed, "Procedural image seed");

  // modgrid
  std::string m_ckpt, m_img, m_out, m_levels = "0,0.5,1";
  auto* modgrid = app.add_subcommand("modgrid", "Restore over a grid of score pairs");
  modgrid->add_option("--checkpoint", m_ckpt)->required();
  modgrid->add_option("-i,--image", m_img)->required();
  modgrid->add_option("-o,--output", m_out, "Grid PNG; distances go to <output>.json")->required();
  modgrid->add_option("--levels", m_levels, "Comma-separated score levels (rows: s_n, columns: s_b)");

  // serve
  service::ServiceConfig sc;
  std::string v_bind, v_ckpt;
  std::optional<int> v_port;
  auto* serve = app.add_subcommand("serve", "HTTP inference service");
  serve->add_option("--checkpoint", v_ckpt, "Checkpoint (env MMSR_CHECKPOINT)");
  serve->add_option("--bind", v_bind, "Bind address (env MMSR_BIND)");
  serve->add_option("--port", v_port, "Port (env MMSR_PORT)");
  serve->add_option("--max-edge", sc.max_edge);
  serve->add_option("--timeout", sc.timeout_s, "Per-request timeout in seconds");
  serve->add_option("--cors", sc.cors_allow, "Allowed origins");
  serve->add_option("--threads", sc.threads);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  try {
    if (*degrade) {
      const Image hr = read_image(d_in);
      degrade::DegradationRecipe recipe;
      if (!d_recipe_in.empty()) {
        recipe = degrade::DegradationRecipe::from_json(nlohmann::json::parse(slurp(d_recipe_in)));
      } else {
        const auto cfg = d_cfg.empty() ? degrade::DegradeConfig{} : degrade::DegradeConfig::from_json(load_config_file(d_cfg));
        Rng rng(d_seed);
        recipe = degrade::sample_recipe(cfg, rng);
      }
      write_image(d_out, degrade::apply_recipe(hr, recipe));
      write_bytes(d_recipe_out.empty() ? d_out + ".recipe.json" : d_recipe_out, recipe.to_json().dump(2) + "\n");
      return kExitOk;
    }

    if (*train) {
      std::unique_ptr<train::TrainState> st;
      if (!t_resume.empty()) {
        if (t_seed) throw UsageError("--seed cannot be combined with --resume");
        st = std::make_unique<train::TrainState>(load_checkpoint(t_resume));
      } else {
        nlohmann::json j = t_cfg.empty() ? nlohmann::json::object() : load_config_file(t_cfg);
        if (t_seed) j["seed"] = *t_seed;
        st = std::make_unique<train::TrainState>(train::TrainConfig::from_json(j));
      }
      train::RunOptions opt;
      opt.out_dir = t_out;
      opt.echo = !t_quiet;
      opt.max_iters = t_max;
      const auto eval_set = synth::image_set(derive_seed(st->config.seed, {0xE7A1}), std::max<std::size_t>(st->config.eval_images, 5), 64, 64);
      opt.on_eval = [&](const train::TrainState& s) {
        nlohmann::json j{{"iter", s.iteration()}};
        for (auto k : eval::kAllKinds) j[std::string(eval::to_string(k))] = eval::degradation_sweep(s.ckpt.models.udem, eval_set, k).summary();
        if (!t_quiet) out << j.dump() << '\n';
      };
      train::run_training(*st, opt);
      return kExitOk;
    }

    if (*score) {
      const auto ck = load_checkpoint(s_ckpt);
      out << json_line(ck.models.udem.score(read_image(s_img)).clamped()) << '\n';
      return kExitOk;
    }

    if (*restore) {
      std::optional<nets::ScorePair> given;
      if (!r_scores.empty()) given = parse_score_pair(r_scores);
      const auto ck = load_checkpoint(r_ckpt);
      const Image lr = read_image(r_img);
      const auto used = given ? *given : ck.models.udem.score(lr).clamped();
      write_image(r_out, ck.models.restore(lr, used));
      out << json_line(used) << '\n';
      return kExitOk;
    }

    if (*sweep) {
      std::vector<eval::SweepKind> kinds;
      if (w_kind == "all") {
        kinds.assign(std::begin(eval::kAllKinds), std::end(eval::kAllKinds));
      } else {
        try {
          kinds.push_back(eval::sweep_kind_from_string(w_kind));
        } catch (const std::invalid_argument& e) {
          throw UsageError(e.what());
        }
      }
      const auto ck = load_checkpoint(w_ckpt);
      const auto imgs = eval_images(w_files, w_count, w_size, w_seed);
      std::filesystem::create_directories(w_out);
      nlohmann::json all = nlohmann::json::array();
      for (auto k : kinds) {
        const auto r = eval::degradation_sweep(ck.models.udem, imgs, k);
        const auto base = (std::filesystem::path(w_out) / ("sweep_" + std::string(eval::to_string(k)))).string();
        write_bytes(base + ".csv", r.csv());
        write_bytes(base + ".json", r.summary().dump(2) + "\n");
        all.push_back(r.summary());
      }
      out << all.dump() << '\n';
      return kExitOk;
    }

    if (*modgrid) {
      const auto levels = parse_levels(m_levels);
      const auto ck = load_checkpoint(m_ckpt);
      const Image lr = read_image(m_img);
      std::vector<nets::ScorePair> pairs;
      for (double sn : levels)
        for (double sb : levels) pairs.push_back({sn, sb});
      const auto g = eval::modulation_grid(ck.models, lr, pairs);
      write_image(m_out, eval::tile(g.outputs, levels.size()));
      nlohmann::json j{{"levels", levels}, {"pairs", nlohmann::json::array()}, {"distance", g.distance}};
      for (const auto& p : pairs) j["pairs"].push_back({p.s_n, p.s_b});
      write_bytes(m_out + ".json", j.dump(2) + "\n");
      return kExitOk;
    }

    if (*serve) {
      sc.apply_env();
      if (!v_ckpt.empty()) sc.checkpoint = v_ckpt;
      if (!v_bind.empty()) sc.bind = v_bind;
      if (v_port) sc.port = *v_port;
      if (sc.checkpoint.empty()) throw UsageError("serve needs --checkpoint or MMSR_CHECKPOINT");
      service::Service svc(sc, &err);
      const int port = svc.bind();
      err << nlohmann::json{{"event", "listening"}, {"bind", sc.bind}, {"port", port}, {"checkpoint_hash", svc.health()["checkpoint_hash"]}}.dump()
          << '\n';
      std::atomic<bool> stop{false};
      auto watcher = service::watch_sighup(svc, stop, err);
      const bool ok = svc.serve();
      stop = true;
      watcher.join();
      return ok ? kExitOk : kExitRuntime;
    }
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace mmsr::cli
