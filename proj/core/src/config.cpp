/*
 * Copyright 2026 The cdstl authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "cdstl/config.hpp"

#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "cdstl/errors.hpp"
#include "cdstl/hash.hpp"
#include "cdstl/rng.hpp"

namespace cdstl {

namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

uint64_t parse_u64(const std::string& v, const std::string& where) {
  try {
    size_t used = 0;
    uint64_t r = std::stoull(v, &used);
    if (used != v.size()) throw std::invalid_argument("");
    return r;
  } catch (...) {
    throw config_error(where + ": expected unsigned integer, got '" + v + "'");
  }
}

int64_t parse_i64(const std::string& v, const std::string& where) {
  try {
    size_t used = 0;
    int64_t r = std::stoll(v, &used);
    if (used != v.size()) throw std::invalid_argument("");
    return r;
  } catch (...) {
    throw config_error(where + ": expected integer, got '" + v + "'");
  }
}

double parse_f64(const std::string& v, const std::string& where) {
  try {
    size_t used = 0;
    double r = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument("");
    return r;
  } catch (...) {
    throw config_error(where + ": expected number, got '" + v + "'");
  }
}

// Field registry: canonical order for serialization, shared by the parser.
struct Field {
  std::string section, key;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string&)> set;
};

std::vector<Field> field_registry() {
  std::vector<Field> f;
  auto add = [&f](std::string section, std::string key, auto getter, auto setter) {
    f.push_back({std::move(section), std::move(key), getter, setter});
  };
  using C = ExperimentConfig;

  add("dataset", "source", [](const C& c) { return c.dataset.source; },
      [](C& c, const std::string& v) { c.dataset.source = v; });
  add("dataset", "seed", [](const C& c) { return std::to_string(c.dataset.seed); },
      [](C& c, const std::string& v) { c.dataset.seed = parse_u64(v, "dataset.seed"); });
  add("dataset", "classes", [](const C& c) { return std::to_string(c.dataset.classes); },
      [](C& c, const std::string& v) { c.dataset.classes = parse_i64(v, "dataset.classes"); });
  add("dataset", "per_class", [](const C& c) { return std::to_string(c.dataset.per_class); },
      [](C& c, const std::string& v) { c.dataset.per_class = parse_i64(v, "dataset.per_class"); });
  add("dataset", "resolution", [](const C& c) { return std::to_string(c.dataset.resolution); },
      [](C& c, const std::string& v) {
        c.dataset.resolution = static_cast<int>(parse_i64(v, "dataset.resolution"));
      });
  add("dataset", "noise", [](const C& c) { return fmt_double(c.dataset.noise); },
      [](C& c, const std::string& v) { c.dataset.noise = parse_f64(v, "dataset.noise"); });
  add("dataset", "test_fraction", [](const C& c) { return fmt_double(c.dataset.test_fraction); },
      [](C& c, const std::string& v) {
        c.dataset.test_fraction = parse_f64(v, "dataset.test_fraction");
      });
  add("dataset", "images", [](const C& c) { return c.dataset.images; },
      [](C& c, const std::string& v) { c.dataset.images = v; });
  add("dataset", "labels", [](const C& c) { return c.dataset.labels; },
      [](C& c, const std::string& v) { c.dataset.labels = v; });
  add("dataset", "test_images", [](const C& c) { return c.dataset.test_images; },
      [](C& c, const std::string& v) { c.dataset.test_images = v; });
  add("dataset", "test_labels", [](const C& c) { return c.dataset.test_labels; },
      [](C& c, const std::string& v) { c.dataset.test_labels = v; });

  add("scorer", "arch", [](const C& c) { return c.scorer.arch; },
      [](C& c, const std::string& v) { c.scorer.arch = v; });
  add("scorer", "epochs", [](const C& c) { return std::to_string(c.scorer.epochs); },
      [](C& c, const std::string& v) {
        c.scorer.epochs = static_cast<int>(parse_i64(v, "scorer.epochs"));
      });
  add("scorer", "batch", [](const C& c) { return std::to_string(c.scorer.batch); },
      [](C& c, const std::string& v) { c.scorer.batch = parse_i64(v, "scorer.batch"); });
  add("scorer", "lr", [](const C& c) { return fmt_double(c.scorer.lr); },
      [](C& c, const std::string& v) { c.scorer.lr = parse_f64(v, "scorer.lr"); });

  add("prune", "r", [](const C& c) { return fmt_double(c.prune.r); },
      [](C& c, const std::string& v) { c.prune.r = parse_f64(v, "prune.r"); });
  add("prune", "mode", [](const C& c) { return c.prune.mode; },
      [](C& c, const std::string& v) { c.prune.mode = v; });

  add("distill", "method", [](const C& c) { return c.distill.method; },
      [](C& c, const std::string& v) { c.distill.method = v; });
  add("distill", "space", [](const C& c) { return c.distill.space; },
      [](C& c, const std::string& v) { c.distill.space = v; });
  add("distill", "ipc", [](const C& c) { return std::to_string(c.distill.ipc); },
      [](C& c, const std::string& v) { c.distill.ipc = parse_i64(v, "distill.ipc"); });
  add("distill", "iterations", [](const C& c) { return std::to_string(c.distill.iterations); },
      [](C& c, const std::string& v) {
        c.distill.iterations = static_cast<int>(parse_i64(v, "distill.iterations"));
      });
  add("distill", "synthetic_lr", [](const C& c) { return c.distill.synthetic_lr; },
      [](C& c, const std::string& v) { c.distill.synthetic_lr = v; });
  add("distill", "inner_steps", [](const C& c) { return std::to_string(c.distill.inner_steps); },
      [](C& c, const std::string& v) {
        c.distill.inner_steps = static_cast<int>(parse_i64(v, "distill.inner_steps"));
      });
  add("distill", "expert_steps", [](const C& c) { return std::to_string(c.distill.expert_steps); },
      [](C& c, const std::string& v) {
        c.distill.expert_steps = static_cast<int>(parse_i64(v, "distill.expert_steps"));
      });
  add("distill", "models_per_iteration",
      [](const C& c) { return std::to_string(c.distill.models_per_iteration); },
      [](C& c, const std::string& v) {
        c.distill.models_per_iteration =
            static_cast<int>(parse_i64(v, "distill.models_per_iteration"));
      });
  add("distill", "batch_per_class",
      [](const C& c) { return std::to_string(c.distill.batch_per_class); },
      [](C& c, const std::string& v) {
        c.distill.batch_per_class = parse_i64(v, "distill.batch_per_class");
      });
  add("distill", "init", [](const C& c) { return c.distill.init; },
      [](C& c, const std::string& v) { c.distill.init = v; });
  add("distill", "dc_granularity", [](const C& c) { return c.distill.dc_granularity; },
      [](C& c, const std::string& v) { c.distill.dc_granularity = v; });
  add("distill", "inner_lr", [](const C& c) { return fmt_double(c.distill.inner_lr); },
      [](C& c, const std::string& v) { c.distill.inner_lr = parse_f64(v, "distill.inner_lr"); });
  add("distill", "expert_total_steps",
      [](const C& c) { return std::to_string(c.distill.expert_total_steps); },
      [](C& c, const std::string& v) {
        c.distill.expert_total_steps =
            static_cast<int>(parse_i64(v, "distill.expert_total_steps"));
      });
  add("distill", "expert_snapshot_interval",
      [](const C& c) { return std::to_string(c.distill.expert_snapshot_interval); },
      [](C& c, const std::string& v) {
        c.distill.expert_snapshot_interval =
            static_cast<int>(parse_i64(v, "distill.expert_snapshot_interval"));
      });
  add("distill", "expert_lr", [](const C& c) { return fmt_double(c.distill.expert_lr); },
      [](C& c, const std::string& v) {
        c.distill.expert_lr = parse_f64(v, "distill.expert_lr");
      });
  add("distill", "expert_batch", [](const C& c) { return std::to_string(c.distill.expert_batch); },
      [](C& c, const std::string& v) {
        c.distill.expert_batch = parse_i64(v, "distill.expert_batch");
      });
  add("distill", "expert_count", [](const C& c) { return std::to_string(c.distill.expert_count); },
      [](C& c, const std::string& v) {
        c.distill.expert_count = static_cast<int>(parse_i64(v, "distill.expert_count"));
      });

  add("latent", "latent_d", [](const C& c) { return std::to_string(c.latent.latent_d); },
      [](C& c, const std::string& v) { c.latent.latent_d = parse_i64(v, "latent.latent_d"); });
  add("latent", "decoder_epochs",
      [](const C& c) { return std::to_string(c.latent.decoder_epochs); },
      [](C& c, const std::string& v) {
        c.latent.decoder_epochs = static_cast<int>(parse_i64(v, "latent.decoder_epochs"));
      });
  add("latent", "decoder_lr", [](const C& c) { return fmt_double(c.latent.decoder_lr); },
      [](C& c, const std::string& v) {
        c.latent.decoder_lr = parse_f64(v, "latent.decoder_lr");
      });
  add("latent", "decoder_batch", [](const C& c) { return std::to_string(c.latent.decoder_batch); },
      [](C& c, const std::string& v) {
        c.latent.decoder_batch = parse_i64(v, "latent.decoder_batch");
      });
  add("latent", "decoder_mode", [](const C& c) { return c.latent.decoder_mode; },
      [](C& c, const std::string& v) { c.latent.decoder_mode = v; });
  add("latent", "min_compression",
      [](const C& c) { return fmt_double(c.latent.min_compression); },
      [](C& c, const std::string& v) {
        c.latent.min_compression = parse_f64(v, "latent.min_compression");
      });

  add("eval", "archs", [](const C& c) { return c.eval.archs; },
      [](C& c, const std::string& v) { c.eval.archs = v; });
  add("eval", "repeats", [](const C& c) { return std::to_string(c.eval.repeats); },
      [](C& c, const std::string& v) {
        c.eval.repeats = static_cast<int>(parse_i64(v, "eval.repeats"));
      });
  add("eval", "epochs", [](const C& c) { return std::to_string(c.eval.epochs); },
      [](C& c, const std::string& v) {
        c.eval.epochs = static_cast<int>(parse_i64(v, "eval.epochs"));
      });
  add("eval", "batch", [](const C& c) { return std::to_string(c.eval.batch); },
      [](C& c, const std::string& v) { c.eval.batch = parse_i64(v, "eval.batch"); });
  add("eval", "lr", [](const C& c) { return fmt_double(c.eval.lr); },
      [](C& c, const std::string& v) { c.eval.lr = parse_f64(v, "eval.lr"); });

  add("sweep", "grid", [](const C& c) { return c.sweep.grid; },
      [](C& c, const std::string& v) { c.sweep.grid = v; });

  add("output", "dir", [](const C& c) { return c.output.dir; },
      [](C& c, const std::string& v) { c.output.dir = v; });
  return f;
}

const std::vector<Field>& fields() {
  static const std::vector<Field> f = field_registry();
  return f;
}

}  // namespace

namespace {

std::string serialize_fields(const ExperimentConfig& cfg, bool include_output) {
  std::ostringstream os;
  std::string current;
  for (const auto& f : fields()) {
    if (!include_output && f.section == "output") continue;
    if (f.section != current) {
      if (!current.empty()) os << "\n";
      os << "[" << f.section << "]\n";
      current = f.section;
    }
    os << f.key << " = " << f.get(cfg) << "\n";
  }
  return os.str();
}

}  // namespace

std::string ExperimentConfig::serialize() const { return serialize_fields(*this, true); }

ExperimentConfig ExperimentConfig::parse(const std::string& text) {
  ExperimentConfig cfg;
  std::istringstream in(text);
  std::string line, section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    if (t.front() == '[' && t.back() == ']') {
      section = t.substr(1, t.size() - 2);
      bool known = false;
      for (const auto& f : fields())
        if (f.section == section) {
          known = true;
          break;
        }
      if (!known)
        throw config_error("config line " + std::to_string(line_no) + ": unknown section [" +
                           section + "]");
      continue;
    }
    auto eq = t.find('=');
    if (eq == std::string::npos)
      throw config_error("config line " + std::to_string(line_no) + ": expected key = value");
    std::string key = trim(t.substr(0, eq));
    std::string value = trim(t.substr(eq + 1));
    bool found = false;
    for (const auto& f : fields()) {
      if (f.section == section && f.key == key) {
        f.set(cfg, value);
        found = true;
        break;
      }
    }
    if (!found)
      throw config_error("config line " + std::to_string(line_no) + ": unknown key " +
                         (section.empty() ? key : section + "." + key));
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw io_error("cannot open config: " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse(ss.str());
}

uint64_t ExperimentConfig::config_hash() const {
  return fnv1a64(serialize_fields(*this, false));
}

std::string ExperimentConfig::config_hash_hex() const { return hex64(config_hash()); }

void ExperimentConfig::validate() const {
  if (dataset.source != "shapes" && dataset.source != "idx")
    throw config_error("dataset.source must be shapes or idx");
  if (dataset.source == "shapes") {
    if (dataset.classes < 2 || dataset.classes > 10)
      throw config_error("dataset.classes must be in [2,10]");
    if (dataset.resolution != 16 && dataset.resolution != 32)
      throw config_error("dataset.resolution must be 16 or 32");
    if (dataset.per_class < 2) throw config_error("dataset.per_class must be >= 2");
    if (dataset.noise < 0.0) throw config_error("dataset.noise must be >= 0");
  } else if (dataset.images.empty() || dataset.labels.empty()) {
    throw config_error("dataset.source=idx requires images and labels paths");
  }
  if (!(dataset.test_fraction > 0.0 && dataset.test_fraction < 0.5))
    throw config_error("dataset.test_fraction must be in (0, 0.5)");
  arch_from_name(scorer.arch);
  if (scorer.epochs < 1) throw config_error("scorer.epochs must be >= 1");
  if (!(prune.r > 0.0 && prune.r <= 1.0)) throw config_error("prune.r must be in (0,1]");
  prune_mode_from_name(prune.mode);
  method_from_name(distill.method);
  if (distill.space != "pixel" && distill.space != "latent")
    throw config_error("distill.space must be pixel or latent");
  if (distill.ipc < 1) throw config_error("distill.ipc must be >= 1");
  if (distill.init != "real-sample" && distill.init != "noise")
    throw config_error("distill.init must be real-sample or noise");
  if (distill.dc_granularity != "global" && distill.dc_granularity != "per-layer")
    throw config_error("distill.dc_granularity must be global or per-layer");
  if (distill.synthetic_lr != "auto") parse_f64(distill.synthetic_lr, "distill.synthetic_lr");
  if (latent.decoder_mode != "pretrained" && latent.decoder_mode != "random-init")
    throw config_error("latent.decoder_mode must be pretrained or random-init");
  if (eval.repeats < 2) throw config_error("eval.repeats must be >= 2");
  eval_arch_list();
  if (sweep.grid != "coarse" && sweep.grid != "fine")
    throw config_error("sweep.grid must be coarse or fine");
  distill_config().validate();
}

double ExperimentConfig::resolved_synthetic_lr() const {
  if (distill.synthetic_lr != "auto") return parse_f64(distill.synthetic_lr, "synthetic_lr");
  switch (method_from_name(distill.method)) {
    case DistillMethod::dc: return 0.03;
    case DistillMethod::dm: return 0.1;
    case DistillMethod::mtt: return 10.0;
  }
  return 1.0;
}

DistillConfig ExperimentConfig::distill_config() const {
  DistillConfig d;
  d.method = method_from_name(distill.method);
  d.iterations = distill.iterations;
  d.synthetic_lr = resolved_synthetic_lr();
  d.inner_steps = distill.inner_steps;
  d.expert_steps = distill.expert_steps;
  d.models_per_iteration = distill.models_per_iteration;
  d.batch_per_class = distill.batch_per_class;
  d.seed = derive_seed(dataset.seed, "distill");
  d.init = distill.init == "noise" ? InitStrategy::noise : InitStrategy::real_sample;
  d.dc_granularity = distill.dc_granularity == "per-layer" ? DcGranularity::per_layer
                                                           : DcGranularity::global;
  d.inner_lr = distill.inner_lr;
  d.expert_total_steps = distill.expert_total_steps;
  d.expert_snapshot_interval = distill.expert_snapshot_interval;
  d.expert_lr = distill.expert_lr;
  d.expert_batch = distill.expert_batch;
  d.expert_count = distill.expert_count;
  return d;
}

std::vector<Arch> ExperimentConfig::eval_arch_list() const {
  std::vector<Arch> archs;
  std::istringstream ss(eval.archs);
  std::string name;
  while (std::getline(ss, name, ',')) {
    name = trim(name);
    if (!name.empty()) archs.push_back(arch_from_name(name));
  }
  if (archs.empty()) archs = default_eval_archs();
  return archs;
}

EvalParams ExperimentConfig::eval_params(int jobs) const {
  EvalParams p;
  p.archs = eval_arch_list();
  p.repeats = eval.repeats;
  p.epochs = eval.epochs;
  p.batch = eval.batch;
  p.lr = eval.lr;
  p.seed = derive_seed(dataset.seed, "eval");
  p.jobs = jobs;
  return p;
}

std::vector<double> ExperimentConfig::grid_values(const std::string& grid_name) const {
  if (grid_name == "coarse") return {0.2, 0.4, 0.6, 0.8, 1.0};
  if (grid_name == "fine")
    return {0.01, 0.02, 0.03, 0.04, 0.05, 0.06, 0.07, 0.08, 0.09, 1.0};
  throw config_error("unknown sweep grid: " + grid_name);
}

}  // namespace cdstl
