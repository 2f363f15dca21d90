// Command-line front end: generate, ablate, inspect, demo-scene.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "ouro/config.hpp"
#include "ouro/dump.hpp"
#include "ouro/metrics.hpp"
#include "ouro/pipeline.hpp"
#include "ouro/scene.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitRuntime = 2;

struct Overrides {
  std::string config_path;
  std::optional<long> frames;
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;
};

ouro::RunConfig resolve(const Overrides& o) {
  ouro::RunConfig cfg = ouro::load_config(o.config_path);
  if (o.frames) cfg.n_frames = *o.frames;
  if (o.out) cfg.output_dir = *o.out;
  if (o.seed) {
    cfg.seed = *o.seed;
    cfg.scene.seed = *o.seed;
  }
  ouro::validate(cfg);
  return cfg;
}

fs::path ensure_dir(const std::string& dir) {
  fs::path p(dir);
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw ouro::ConfigError("output_dir", "cannot create " + dir + ": " + ec.message());
  return p;
}

int cmd_generate(const Overrides& o) {
  const ouro::RunConfig cfg = resolve(o);
  const fs::path dir = ensure_dir(cfg.output_dir);
  const std::string dump_path = (dir / (cfg.run_id + ".ouro")).string();
  const auto run = ouro::generate_to_file(cfg, dump_path);
  std::ofstream csv(dir / (cfg.run_id + "_metrics.csv"));
  csv << ouro::kMetricsCsvHeader << '\n';
  ouro::write_metrics_row(csv, cfg.run_id, ouro::config_hash(cfg), run.result.metrics);
  for (const auto& d : run.result.stats.diagnostics) std::cerr << "note: " << d << '\n';
  std::cout << "wrote " << cfg.n_frames << " frames to " << dump_path << '\n';
  ouro::write_metrics_row(std::cout << ouro::kMetricsCsvHeader << '\n', cfg.run_id, ouro::config_hash(cfg),
                          run.result.metrics);
  return kExitOk;
}

int cmd_ablate(const Overrides& o) {
  const ouro::RunConfig cfg = resolve(o);
  const fs::path dir = ensure_dir(cfg.output_dir);
  const auto rows = ouro::run_ablation(cfg);
  const fs::path csv_path = dir / (cfg.run_id + "_ablation.csv");
  std::ofstream csv(csv_path);
  csv << ouro::kMetricsCsvHeader << '\n';
  std::cout << ouro::kMetricsCsvHeader << '\n';
  for (const auto& r : rows) {
    ouro::write_metrics_row(csv, r.config.run_id, ouro::config_hash(r.config), r.metrics);
    ouro::write_metrics_row(std::cout, r.config.run_id, ouro::config_hash(r.config), r.metrics);
  }
  std::cout << "wrote " << csv_path.string() << '\n';
  return kExitOk;
}

int cmd_inspect(const std::string& path) {
  const ouro::VideoDump dump = ouro::read_dump(path);
  const auto& h = dump.header;
  std::cout << "dtype " << h.dtype << "\nshape [" << h.n_frames << "," << h.frame.c << "," << h.frame.h << ","
            << h.frame.w << "]\nconfig_hash " << h.config_hash << "\nseed " << h.seed << '\n';
  std::cout << "frame,mean,std,min,max\n";
  for (std::size_t i = 0; i < dump.frames.size(); ++i) {
    const auto v = dump.frames[i].values();
    double sum = 0.0, sq = 0.0, mn = v[0], mx = v[0];
    for (double x : v) {
      sum += x;
      sq += x * x;
      mn = std::min(mn, x);
      mx = std::max(mx, x);
    }
    const double n = static_cast<double>(v.size());
    const double mean = sum / n;
    std::printf("%zu,%.6f,%.6f,%.6f,%.6f\n", i, mean, std::sqrt(std::max(0.0, sq / n - mean * mean)), mn, mx);
  }
  return kExitOk;
}

int cmd_demo_scene(const Overrides& o) {
  const ouro::RunConfig cfg = resolve(o);
  const fs::path dir = ensure_dir(cfg.output_dir);
  const std::string path = (dir / (cfg.run_id + "_scene.ouro")).string();
  ouro::DumpWriter writer(path, ouro::dump_header_for(cfg));
  for (long i = 0; i < cfg.n_frames; ++i) writer.write(ouro::render_frame(cfg.scene, i).latent);
  writer.close();
  std::cout << "wrote " << cfg.n_frames << " scene frames to " << path << '\n';
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Long-video FIFO diffusion with coherent tails, SACFA and self-recurrent guidance"};
  app.require_subcommand(1);

  Overrides gen, abl, demo;
  std::string inspect_path;

  auto add_common = [](CLI::App* sub, Overrides& o, bool run_flags) {
    sub->add_option("--config", o.config_path, "JSON run configuration")->required();
    if (run_flags) {
      sub->add_option("--frames", o.frames, "number of frames to emit");
      sub->add_option("--seed", o.seed, "run seed");
    }
    sub->add_option("--out", o.out, "output directory");
  };

  auto* g = app.add_subcommand("generate", "generate a video dump and its metrics");
  add_common(g, gen, true);
  auto* a = app.add_subcommand("ablate", "run the four-row component ablation");
  add_common(a, abl, false);
  auto* i = app.add_subcommand("inspect", "print a dump header and per-frame statistics");
  i->add_option("dump", inspect_path, "video dump file")->required();
  auto* d = app.add_subcommand("demo-scene", "write the ground-truth scene video");
  add_common(d, demo, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*g) return cmd_generate(gen);
    if (*a) return cmd_ablate(abl);
    if (*i) return cmd_inspect(inspect_path);
    if (*d) return cmd_demo_scene(demo);
  } catch (const ouro::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const ouro::FormatError& e) {
    std::cerr << "format error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitRuntime;
}
