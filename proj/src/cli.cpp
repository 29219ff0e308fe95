#include "lightattack/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iomanip>
#include <memory>
#include <numeric>
#include <optional>
#include <sstream>

#include "lightattack/attack.hpp"
#include "lightattack/errors.hpp"
#include "lightattack/persistence.hpp"
#include "lightattack/remote.hpp"

namespace lightattack {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Options {
  std::string image;
  std::string labels = kBuiltinCoco30;
  std::string truth;
  std::string provider = "local";
  std::string endpoint;
  std::string out_dir = ".";
  std::string config_path;
  std::string lights_spec;
  int draws = 0;
  int snapshot_every = 0;
  AttackConfig attack;
};

void add_provider_flags(CLI::App* cmd, Options& o) {
  cmd->add_option("--provider", o.provider, "Embedding provider")
      ->check(CLI::IsMember({"local", "remote"}));
  cmd->add_option("--endpoint", o.endpoint, "Sidecar base URL for --provider remote")
      ->envname("ITA_ENDPOINT");
}

void add_search_flags(CLI::App* cmd, Options& o) {
  AttackConfig& a = o.attack;
  cmd->add_option("--image", o.image, "Input image (PNG or binary PPM)")->required();
  cmd->add_option("--labels", o.labels, "Label file or builtin:coco30");
  cmd->add_option("--truth", o.truth, "Ground-truth label");
  cmd->add_option("--lights", a.n_lights, "Number of point lights")->check(CLI::PositiveNumber);
  cmd->add_option("--pop", a.population, "Samples per iteration")->check(CLI::Range(2, 100000));
  cmd->add_option("--iters", a.max_iters, "Maximum iterations")->check(CLI::NonNegativeNumber);
  cmd->add_option("--alpha", a.alpha, "Perceptual weight")->check(CLI::NonNegativeNumber);
  cmd->add_option("--beta", a.beta, "Light-separation weight")->check(CLI::NonNegativeNumber);
  cmd->add_option("--delta", a.dist_threshold, "Minimum light separation in pixels")
      ->check(CLI::NonNegativeNumber);
  cmd->add_option("--ambient", a.ambient_gain, "Ambient gain")->check(CLI::Range(0.0, 2.0));
  cmd->add_option("--seed", a.seed, "Random seed");
  cmd->add_option("--patience", a.patience, "Stagnant iterations before stopping")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--min-delta", a.min_delta, "Best-fitness change counted as stagnant")
      ->check(CLI::NonNegativeNumber);
  cmd->add_flag("--lra", a.lra, "Enable the learning-rate adaptation factor");
  cmd->add_option("--workers", a.workers, "Parallel candidate evaluations")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--out-dir", o.out_dir, "Output directory");
  add_provider_flags(cmd, o);
}

void add_config_flag(CLI::App* cmd, Options& o) {
  cmd->add_option("--config", o.config_path, "key=value file mirroring the flags");
}

// Config entries become "--key=value" arguments placed before the real ones;
// with TakeLast, explicit flags win.
std::vector<std::string> expand_config(const std::vector<std::string>& args, CLI::App& app,
                                       const std::vector<CLI::App*>& commands) {
  if (args.empty()) return args;
  std::optional<std::string> path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
  }
  if (!path) return args;
  CLI::App* cmd = app.get_subcommand_no_throw(args.front());
  if (!cmd) return args;
  const auto bytes = read_file(*path);
  const auto entries = parse_config_text(std::string(bytes.begin(), bytes.end()));

  std::vector<std::string> out{args.front()};
  for (const auto& [key, value] : entries) {
    if (key == "config") throw UsageError("config files cannot include other config files");
    const std::string flag = "--" + key;
    if (cmd->get_option_no_throw(flag)) {
      out.push_back(flag + "=" + value);
      continue;
    }
    const bool known_elsewhere = std::any_of(commands.begin(), commands.end(), [&](CLI::App* c) {
      return c->get_option_no_throw(flag) != nullptr;
    });
    if (!known_elsewhere) throw UsageError("unknown config key '" + key + "'");
  }
  out.insert(out.end(), args.begin() + 1, args.end());
  return out;
}

std::unique_ptr<EmbeddingProvider> make_provider(const Options& o) {
  if (o.provider == "remote") {
    if (o.endpoint.empty()) throw UsageError("--provider remote needs --endpoint or ITA_ENDPOINT");
    return std::make_unique<RemoteProvider>(RemoteEndpoint{o.endpoint});
  }
  return std::make_unique<LocalProvider>();
}

LabelSet resolve_labels(const Options& o) {
  const LabelList list = load_labels(o.labels);
  std::string truth = o.truth;
  if (truth.empty()) {
    auto it = list.truth_by_file.find(fs::path(o.image).filename().string());
    if (it == list.truth_by_file.end()) {
      throw UsageError("--truth is required (no @truth annotation for this image)");
    }
    truth = it->second;
  }
  const auto idx = std::find(list.labels.begin(), list.labels.end(), truth);
  if (idx == list.labels.end()) throw UsageError("truth label '" + truth + "' is not in the label list");
  return LabelSet(list.labels, static_cast<std::size_t>(idx - list.labels.begin()));
}

void finalize_attack_config(Options& o) {
  o.attack.provider = o.provider == "remote" ? ProviderKind::remote : ProviderKind::local;
  o.attack.endpoint = o.endpoint;
}

json echo(const Options& o, const LabelSet& labels) {
  json extra = {{"image", o.image}, {"labels", o.labels}, {"truth", labels.truth()}};
  if (o.draws > 0) extra["draws"] = o.draws;
  return extra;
}

void write_outputs(const fs::path& dir, const AttackResult& r, const ImageBuffer& image,
                   const RunReport& report) {
  fs::create_directories(dir);
  save_image(r.adversarial, dir / "adversarial.png");
  save_light_map(render_light_map(r.lambda_star, image.width(), image.height()), dir / "lightmap.png");
  save_report(report, dir / "report.json");
}

int summarize(std::ostream& out, const std::string& command, const AttackResult& r,
              const fs::path& dir) {
  const json line = {{"command", command},
                     {"success", r.success},
                     {"clean", r.clean.label},
                     {"adversarial", r.adversarial_prediction.label},
                     {"best_fitness", r.best_loss.fitness},
                     {"evaluations", r.evaluations},
                     {"stop_reason", to_string(r.stop_reason)},
                     {"out_dir", dir.string()}};
  out << line.dump() << "\n";
  return r.success ? kExitSuccess : kExitAttackFailed;
}

int cmd_attack(Options& o, std::ostream& out) {
  finalize_attack_config(o);
  const ImageBuffer image = load_image(o.image);
  const LabelSet labels = resolve_labels(o);
  const auto provider = make_provider(o);
  const PyramidFeatureExtractor features;
  const fs::path dir = o.out_dir;
  fs::create_directories(dir);
  AttackHooks hooks;
  hooks.snapshot_every = o.snapshot_every;
  hooks.on_snapshot = [&](int iter, const ImageBuffer& best) {
    char name[32];
    std::snprintf(name, sizeof(name), "best_iter_%04d.png", iter);
    save_image(best, dir / name);
  };
  const AttackResult r = run_attack(image, labels, o.attack, *provider, features, hooks);
  write_outputs(dir, r, image, make_report(r, o.attack, "attack", echo(o, labels)));
  return summarize(out, "attack", r, dir);
}

int cmd_baseline(Options& o, std::ostream& out) {
  finalize_attack_config(o);
  if (o.draws <= 0) o.draws = o.attack.population * o.attack.max_iters;
  if (o.draws <= 0) throw UsageError("--draws must be positive");
  const ImageBuffer image = load_image(o.image);
  const LabelSet labels = resolve_labels(o);
  const auto provider = make_provider(o);
  const PyramidFeatureExtractor features;
  const AttackResult r = run_random_baseline(image, labels, o.attack, o.draws, *provider, features);
  const fs::path dir = o.out_dir;
  write_outputs(dir, r, image, make_report(r, o.attack, "baseline", echo(o, labels)));
  return summarize(out, "baseline", r, dir);
}

LightingConfig parse_lights_spec(const std::string& spec) {
  std::vector<double> flat;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      flat.push_back(std::stod(item, &used));
      if (item.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw UsageError("--lights-spec: '" + item + "' is not a number");
    }
  }
  if (flat.empty() || flat.size() % 4 != 0) {
    throw UsageError("--lights-spec needs 4N numbers (x,y,intensity,radius per light), got " +
                     std::to_string(flat.size()));
  }
  try {
    return LightingConfig::from_flat(flat);
  } catch (const std::invalid_argument& e) {
    throw UsageError(std::string("--lights-spec: ") + e.what());
  }
}

int cmd_render(Options& o, std::ostream& out) {
  const LightingConfig cfg = parse_lights_spec(o.lights_spec);
  RenderParams params{o.attack.ambient_gain};
  const ImageBuffer image = load_image(o.image);
  const fs::path dir = o.out_dir;
  fs::create_directories(dir);
  save_image(relight(image, cfg, params), dir / "relit.png");
  save_light_map(render_light_map(cfg, image.width(), image.height()), dir / "lightmap.png");
  out << json{{"command", "render"}, {"lights", cfg.size()}, {"out_dir", dir.string()}}.dump() << "\n";
  return kExitSuccess;
}

int cmd_eval(Options& o, std::ostream& out) {
  const ImageBuffer image = load_image(o.image);
  const LabelList list = load_labels(o.labels);
  const auto provider = make_provider(o);
  const auto text = provider->embed_texts(list.labels);
  const auto sim = similarity_vector(provider->embed_image(image), text);
  const auto prob = softmax(sim);
  std::vector<std::size_t> order(sim.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return sim[a] > sim[b]; });
  out << "rank\tlabel\tsimilarity\tprobability\n";
  out << std::setprecision(17);
  for (std::size_t r = 0; r < order.size(); ++r) {
    const auto i = order[r];
    out << r + 1 << '\t' << list.labels[i] << '\t' << sim[i] << '\t' << prob[i] << '\n';
  }
  return kExitSuccess;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Options o;
  CLI::App app{"Adversarial point-light relighting against image-text classifiers", "lightattack"};
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

  auto* attack = app.add_subcommand("attack", "Optimize a light configuration with CMA-ES");
  add_search_flags(attack, o);
  attack->add_option("--snapshot-every", o.snapshot_every, "Write the best image every k iterations")
      ->check(CLI::NonNegativeNumber);
  add_config_flag(attack, o);

  auto* baseline = app.add_subcommand("baseline", "Best of uniformly random light configurations");
  add_search_flags(baseline, o);
  baseline->add_option("--draws", o.draws, "Random configurations (default pop * iters)")
      ->check(CLI::PositiveNumber);
  add_config_flag(baseline, o);

  auto* render = app.add_subcommand("render", "Relight an image with explicit lights");
  render->add_option("--image", o.image, "Input image")->required();
  render->add_option("--lights-spec", o.lights_spec, "x,y,intensity,radius per light")->required();
  render->add_option("--ambient", o.attack.ambient_gain, "Ambient gain")->check(CLI::Range(0.0, 2.0));
  render->add_option("--out-dir", o.out_dir, "Output directory");
  add_config_flag(render, o);

  auto* eval = app.add_subcommand("eval", "Rank labels for an image");
  eval->add_option("--image", o.image, "Input image")->required();
  eval->add_option("--labels", o.labels, "Label file or builtin:coco30");
  add_provider_flags(eval, o);
  add_config_flag(eval, o);

  const std::vector<CLI::App*> commands{attack, baseline, render, eval};
  try {
    auto expanded = expand_config(args, app, commands);
    std::reverse(expanded.begin(), expanded.end());
    app.parse(expanded);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kExitSuccess : kExitUsage;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitIo;
  }

  try {
    if (attack->parsed()) return cmd_attack(o, out);
    if (baseline->parsed()) return cmd_baseline(o, out);
    if (render->parsed()) return cmd_render(o, out);
    return cmd_eval(o, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const FormatError& e) {
    err << "format error: " << e.what() << "\n";
    return kExitIo;
  } catch (const ValidationError& e) {
    err << "validation error: " << e.what() << "\n";
    return kExitIo;
  } catch (const IoError& e) {
    err << "i/o error: " << e.what() << "\n";
    return kExitIo;
  } catch (const TransportError& e) {
    err << "transport error: " << e.what() << "\n";
    return kExitProvider;
  } catch (const ProtocolError& e) {
    err << "protocol error: " << e.what() << "\n";
    return kExitProvider;
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const fs::filesystem_error& e) {
    err << "i/o error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
}

}  // namespace lightattack
