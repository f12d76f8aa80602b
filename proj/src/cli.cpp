/*
 * Copyright 2026 The PCNN Authors
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


#include "pcnn/cli.hpp"

#include <Eigen/Core>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "pcnn/checkpoint.hpp"
#include "pcnn/config.hpp"
#include "pcnn/data.hpp"
#include "pcnn/error.hpp"
#include "pcnn/evaluation.hpp"
#include "pcnn/gradsuite.hpp"
#include "pcnn/pgm.hpp"
#include "pcnn/regions.hpp"
#include "pcnn/train.hpp"

namespace pcnn::cli {

namespace {

namespace fs = std::filesystem;

struct Splits {
  data::Dataset train;
  data::Dataset test;
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

// Wall-clock stamps live only in this file.
class Log {
 public:
  explicit Log(const fs::path& path) : out_(path, std::ios::app) {}
  void line(const std::string& text) {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    out_ << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ") << ' ' << text << '\n';
    out_.flush();
  }

 private:
  std::ofstream out_;
};

std::string fixed(double v, int digits = 4) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

void check_data_source(const config::RunConfig& rc) {
  if (rc.data == "synthetic") return;
  const auto path = config::resolve_data_path(rc.data);
  if (!fs::exists(path)) throw InvalidConfig("data source '" + rc.data + "' not found");
}

Splits load_splits(const config::RunConfig& rc) {
  Splits s;
  if (rc.data == "synthetic") {
    auto all = data::gen_synthetic_faces(rc.train_size + rc.test_size, rc.model.height,
                                         rc.model.width, rc.seed);
    std::tie(s.train, s.test) = data::split(all, rc.train_size);
  } else {
    const auto path = config::resolve_data_path(rc.data);
    if (fs::is_directory(path)) {
      auto all = data::import_synthetic(path);
      std::tie(s.train, s.test) = data::split(all, std::min(rc.train_size, all.size()));
      if (s.test.size() > rc.test_size) s.test.samples.resize(rc.test_size);
    } else {
      s.train = data::load_fer2013_csv(path, data::parse_usage(rc.train_usage), rc.train_size);
      s.test = data::load_fer2013_csv(path, data::parse_usage(rc.test_usage), rc.test_size);
    }
  }
  if (s.train.height != rc.model.height || s.train.width != rc.model.width) {
    throw InvalidConfig("data is " + std::to_string(s.train.height) + "x" +
                        std::to_string(s.train.width) + " but the model expects " +
                        std::to_string(rc.model.height) + "x" +
                        std::to_string(rc.model.width) + "; set height and width");
  }
  return s;
}

void write_evaluation(const fs::path& out, const eval::EvalResult& r) {
  write_text(out / "eval.csv", "metric,value\naccuracy," + fixed(r.accuracy, 6) +
                                   "\nmean_loss," + fixed(r.mean_loss, 6) + "\n");
  write_text(out / "confusion.csv", r.confusion.to_csv());
  pgm::write_ascii(out / "confusion.pgm", r.confusion.heatmap());
}

template <typename T>
void run_train(const config::RunConfig& rc, const Splits& d,
               std::optional<checkpoint::Loaded<T>> resumed, std::ostream& out, Log& log) {
  std::unique_ptr<model::PcnnModel<T>> model;
  train::OptimizerState<T> state;
  if (resumed) {
    model = std::move(resumed->model);
    state = std::move(resumed->state);
  } else {
    model = std::make_unique<model::PcnnModel<T>>(rc.model);
  }
  const auto* test = d.test.empty() ? nullptr : &d.test;
  const auto history = train::train<T>(
      *model, d.train, test, rc.train, &state,
      [&](std::size_t epoch, const train::EpochStats& s, const train::OptimizerState<T>&) {
        std::ostringstream line;
        line << "epoch " << epoch + 1 << '/' << rc.train.epochs << "  loss "
             << fixed(s.mean_loss) << "  L_G " << fixed(s.mean_ce_global) << "  L_L "
             << fixed(s.mean_ce_local) << "  train_acc " << fixed(s.train_accuracy, 3);
        if (s.eval_accuracy) line << "  test_acc " << fixed(*s.eval_accuracy, 3);
        out << line.str() << std::endl;
        log.line(line.str());
      });
  write_text(rc.out / "history.csv", history.to_csv());
  checkpoint::save_checkpoint(*model, state, rc, rc.out / "model.ckpt");
  if (test) {
    const auto r = eval::evaluate(*model, *test);
    write_evaluation(rc.out, r);
    out << "test accuracy " << fixed(r.accuracy) << " on " << test->size() << " samples\n";
  }
}

template <typename T>
void run_eval(checkpoint::Loaded<T> loaded, const config::RunConfig& rc, const Splits& d,
              std::ostream& out) {
  auto& model = *loaded.model;
  const auto r = eval::evaluate(model, d.test);
  write_evaluation(rc.out, r);
  out << "accuracy " << fixed(r.accuracy) << "  mean_loss " << fixed(r.mean_loss) << "  on "
      << d.test.size() << " samples\n";

  std::vector<data::AugSpec> specs(1);
  auto box = [&](double top, double left, double h, double w) {
    data::AugSpec s;
    s.occlusion = data::Occlusion{h * w, data::Box{top, left, h, w}, data::Fill::kZero};
    return s;
  };
  specs.push_back(box(0.625, 0.0, 0.375, 1.0));  // mouth band
  specs.push_back(box(0.0, 0.0, 0.5, 0.5));      // left eye quadrant
  for (double deg : {-15.0, 15.0}) {
    data::AugSpec s;
    s.pose = data::Pose{deg, 0.0};
    specs.push_back(s);
  }
  data::AugSpec shear;
  shear.pose = data::Pose{0.0, 0.2};
  specs.push_back(shear);
  data::AugSpec random_block;
  random_block.occlusion = data::Occlusion{0.2, std::nullopt, data::Fill::kMean};
  random_block.seed = rc.seed;
  specs.push_back(random_block);

  std::string csv = "spec,accuracy\n";
  for (const auto& row : eval::robustness_report(model, d.test, specs)) {
    csv += "\"" + row.spec + "\"," + fixed(row.accuracy, 6) + "\n";
    out << std::left << std::setw(60) << row.spec << fixed(row.accuracy) << '\n';
  }
  const auto perturbed = eval::pose_occlusion_set(d.test, rc.seed);
  const double acc = eval::evaluate(model, perturbed).accuracy;
  csv += "pose_occlusion_set," + fixed(acc, 6) + "\n";
  out << std::left << std::setw(60) << "pose_occlusion_set" << fixed(acc) << '\n';
  write_text(rc.out / "robustness.csv", csv);
}

const char* face_region_name(std::size_t k) {
  static const char* names[] = {"left_eye", "right_eye", "left_cheek", "right_cheek",
                                "mouth"};
  return k < 5 ? names[k] : "region";
}

struct Invocation {
  config::KeyValues overrides;
  std::string config_file;
  std::vector<std::string> sets;
  std::string checkpoint;
  std::string resume;
  std::string variants = "full,no_crop,two_random_crop,three_crop,four_crop,gfieb_only,no_mdim";
  bool grid = false;
};

void add_key(CLI::App* app, Invocation& inv, const std::string& flag, const std::string& key,
             const std::string& help) {
  app->add_option_function<std::string>(
      flag, [&inv, key](const std::string& v) { inv.overrides[key] = v; }, help);
}

void add_common(CLI::App* app, Invocation& inv) {
  app->add_option("--config", inv.config_file, "key = value config file");
  app->add_option("--set", inv.sets, "override any config key (KEY=VALUE)");
  add_key(app, inv, "--out", "out", "output directory");
  add_key(app, inv, "--seed", "seed", "seed for every random choice");
  add_key(app, inv, "--threads", "threads", "worker thread cap");
}

void add_training_flags(CLI::App* app, Invocation& inv) {
  add_key(app, inv, "--data", "data", "synthetic, a FER2013 CSV, or a synth-gen directory");
  add_key(app, inv, "--epochs", "epochs", "training epochs");
  add_key(app, inv, "--lr", "lr", "learning rate");
  add_key(app, inv, "--batch-size", "batch_size", "batch size");
  add_key(app, inv, "--variant", "variant", "model variant");
  add_key(app, inv, "--precision", "precision", "float or double");
  add_key(app, inv, "--train-size", "train_size", "training samples");
  add_key(app, inv, "--test-size", "test_size", "test samples");
}

config::KeyValues gather(const Invocation& inv, config::KeyValues base) {
  if (!inv.config_file.empty()) config::merge(base, config::read_file(inv.config_file));
  for (const auto& s : inv.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) throw InvalidConfig("--set expects KEY=VALUE, got '" + s + "'");
    base[s.substr(0, eq)] = s.substr(eq + 1);
  }
  config::merge(base, inv.overrides);
  return base;
}

config::KeyValues checkpoint_config(const fs::path& path) {
  auto kv = config::parse(checkpoint::read_file(path).config_text, path.string());
  kv.erase("epoch");
  return kv;
}

void prepare_out(const config::RunConfig& rc) {
  fs::create_directories(rc.out);
  write_text(rc.out / "config.txt", config::format(config::to_key_values(rc)));
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"PCNN facial expression recognition at desk scale", "pcnn"};
  app.require_subcommand(1);
  // --h and --w are image extents, so help is long-form only.
  app.set_help_flag("--help", "print this help");
  Invocation inv;

  auto* train_cmd = app.add_subcommand("train", "train a model and write a checkpoint");
  add_common(train_cmd, inv);
  add_training_flags(train_cmd, inv);
  train_cmd->add_option("--resume", inv.resume, "continue from a checkpoint");

  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint with robustness rows");
  add_common(eval_cmd, inv);
  add_key(eval_cmd, inv, "--data", "data", "synthetic, a FER2013 CSV, or a synth-gen directory");
  add_key(eval_cmd, inv, "--test-size", "test_size", "test samples");
  eval_cmd->add_option("--checkpoint", inv.checkpoint, "checkpoint file")->required();

  auto* grad_cmd = app.add_subcommand("gradcheck", "finite-difference gradient suite");
  add_common(grad_cmd, inv);

  auto* ablate_cmd = app.add_subcommand("ablate", "train variants over seeds and compare");
  add_common(ablate_cmd, inv);
  add_training_flags(ablate_cmd, inv);
  add_key(ablate_cmd, inv, "--seeds", "seeds", "number of consecutive seeds");
  ablate_cmd->add_option("--variants", inv.variants, "comma-separated variant names");
  ablate_cmd->add_flag("--grid", inv.grid, "add the alpha/beta grid");

  auto* seg_cmd = app.add_subcommand("segment-preview", "print face regions and write a PGM");
  add_common(seg_cmd, inv);
  add_key(seg_cmd, inv, "--h", "height", "image height");
  add_key(seg_cmd, inv, "--w", "width", "image width");

  auto* synth_cmd = app.add_subcommand("synth-gen", "write a synthetic face set as PGM files");
  add_common(synth_cmd, inv);
  add_key(synth_cmd, inv, "--n", "train_size", "number of faces");
  add_key(synth_cmd, inv, "--h", "height", "image height");
  add_key(synth_cmd, inv, "--w", "width", "image width");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, err, err);
    err << app.help();
    return kExitInvalid;
  }

  // Validation: nothing is written until this block succeeds.
  config::RunConfig rc;
  std::vector<model::Variant> variants;
  try {
    config::KeyValues base;
    if (eval_cmd->parsed()) base = checkpoint_config(inv.checkpoint);
    if (train_cmd->parsed() && !inv.resume.empty()) base = checkpoint_config(inv.resume);
    if (synth_cmd->parsed()) base["test_size"] = "0";
    rc = config::apply(gather(inv, base));
    if (seg_cmd->parsed()) {
      rc.model.regions.validate();
      if (rc.model.height < regions::kMinImageExtent || rc.model.width < regions::kMinImageExtent)
        throw ImageTooSmall("segment-preview needs h, w >= " +
                            std::to_string(regions::kMinImageExtent));
    } else if (synth_cmd->parsed()) {
      if (rc.model.height < 16 || rc.model.width < 16)
        throw ImageTooSmall("synthetic faces need h, w >= 16");
      if (rc.train_size == 0) throw InvalidConfig("--n must be >= 1");
    } else if (!grad_cmd->parsed()) {
      rc.validate();
      check_data_source(rc);
    }
    if (ablate_cmd->parsed()) {
      std::stringstream ss(inv.variants);
      std::string name;
      while (std::getline(ss, name, ',')) variants.push_back(model::Variant::parse(name));
      if (inv.grid)
        for (const auto& v : eval::alpha_beta_grid()) variants.push_back(v);
      if (variants.empty()) throw InvalidConfig("--variants is empty");
    }
    if (rc.threads == 0) throw InvalidConfig("threads must be >= 1");
  } catch (const Error& e) {
    err << "pcnn: " << e.what() << '\n';
    return kExitInvalid;
  }

  Eigen::setNbThreads(static_cast<int>(rc.threads));
  try {
    if (grad_cmd->parsed()) {
      bool ok = true;
      prepare_out(rc);
      std::string csv = "op,max_rel_error,checked,pass\n";
      gradsuite::run(rc.seed, [&](const GradReport& r) {
        const bool pass = r.max_rel_error <= gradsuite::kTolerance;
        ok = ok && pass;
        std::ostringstream e;
        e << std::scientific << std::setprecision(3) << r.max_rel_error;
        out << std::left << std::setw(28) << r.op_name << " max_rel_error " << e.str()
            << "  checked " << std::setw(4) << r.checked << "  " << (pass ? "PASS" : "FAIL")
            << std::endl;
        csv += r.op_name + "," + e.str() + "," + std::to_string(r.checked) + "," +
               (pass ? "1" : "0") + "\n";
      });
      write_text(rc.out / "gradcheck.csv", csv);
      return ok ? kExitOk : kExitFailure;
    }

    if (seg_cmd->parsed()) {
      const auto layout = regions::RegionLayout::face(rc.model.regions);
      const auto set = layout.resolve(rc.model.height, rc.model.width);
      prepare_out(rc);
      out << "face layout " << rc.model.height << "x" << rc.model.width << '\n';
      for (std::size_t k = 0; k < set.rects.size(); ++k) {
        const auto& r = set.rects[k];
        out << std::left << std::setw(12) << face_region_name(k) << " rows [" << r.row_begin
            << ", " << r.row_end << ")  cols [" << r.col_begin << ", " << r.col_end << ")  "
            << (r.row_end - r.row_begin) << "x" << (r.col_end - r.col_begin) << '\n';
      }
      const auto map = region_index_map(set);
      if (rc.model.width <= 64) {
        for (std::size_t i = 0; i < rc.model.height; ++i) {
          for (std::size_t j = 0; j < rc.model.width; ++j) out << map[i * rc.model.width + j];
          out << '\n';
        }
      }
      pgm::Image img{rc.model.width, rc.model.height, static_cast<unsigned>(set.rects.size()), {}};
      for (int v : map) img.values.push_back(static_cast<std::uint16_t>(v));
      pgm::write_ascii(rc.out / "regions.pgm", img);
      return kExitOk;
    }

    if (synth_cmd->parsed()) {
      const auto ds = data::gen_synthetic_faces(rc.train_size, rc.model.height, rc.model.width,
                                                rc.seed);
      prepare_out(rc);
      data::export_synthetic(ds, rc.out);
      out << "wrote " << ds.size() << " faces to " << rc.out.string() << '\n';
      return kExitOk;
    }

    const Splits d = load_splits(rc);
    prepare_out(rc);
    Log log(rc.out / "log.txt");
    log.line("start " + std::string(app.get_subcommands().front()->get_name()));
    const bool use_float = rc.train.precision == train::Precision::kFloat;

    if (train_cmd->parsed()) {
      if (use_float) {
        std::optional<checkpoint::Loaded<float>> resumed;
        if (!inv.resume.empty()) resumed = checkpoint::load_checkpoint<float>(inv.resume);
        run_train<float>(rc, d, std::move(resumed), out, log);
      } else {
        std::optional<checkpoint::Loaded<double>> resumed;
        if (!inv.resume.empty()) resumed = checkpoint::load_checkpoint<double>(inv.resume);
        run_train<double>(rc, d, std::move(resumed), out, log);
      }
    } else if (eval_cmd->parsed()) {
      if (d.test.empty()) throw EmptyDataset("test split is empty");
      if (use_float) {
        run_eval(checkpoint::load_checkpoint<float>(inv.checkpoint), rc, d, out);
      } else {
        run_eval(checkpoint::load_checkpoint<double>(inv.checkpoint), rc, d, out);
      }
    } else if (ablate_cmd->parsed()) {
      std::vector<std::uint64_t> seeds;
      for (std::size_t i = 0; i < rc.seeds; ++i) seeds.push_back(rc.seed + i);
      if (d.test.empty()) throw EmptyDataset("test split is empty");
      const std::vector<eval::NamedDataset> sets{
          {"clean", d.test}, {"pose_occlusion", eval::pose_occlusion_set(d.test, rc.seed)}};
      const auto report = eval::ablation_suite(
          rc, variants, d.train, sets, seeds, [&](const eval::AblationRow& r) {
            const std::string line = r.variant + " seed " + r.seed + " " + r.dataset +
                                     " accuracy " + fixed(r.accuracy);
            out << line << std::endl;
            log.line(line);
          });
      write_text(rc.out / "ablation.csv", report.to_csv());
      write_text(rc.out / "ablation.txt", report.to_table());
      out << report.to_table();
    }
    log.line("done");
    return kExitOk;
  } catch (const std::exception& e) {
    err << "pcnn: " << e.what() << '\n';
    return kExitFailure;
  }
}

}  // namespace pcnn::cli
