#include "obsbench/config.hpp"

#include <cstdlib>
#include <stdexcept>

#include "obsbench/io.hpp"

namespace obsbench::config {

RunConfig RunConfig::defaults() {
  RunConfig cfg;
  cfg.noise = sim::NoiseSpec::nominal();
  cfg.gen = datagen::GenConfig::defaults();
  return cfg;
}

void RunConfig::validate() const {
  if (dataset_dir.empty() || model_dir.empty() || report_dir.empty())
    throw std::invalid_argument("directory paths must not be empty");
  params.validate();
  noise.validate();
  gen.validate();
  training.validate();
  if (jobs < 1) throw std::invalid_argument("jobs must be >= 1");
}

namespace {

std::string method_name(nn::OptimizerConfig::Method m) {
  return m == nn::OptimizerConfig::Method::adam ? "adam" : "sgd";
}

nn::OptimizerConfig::Method method_from_name(const std::string& name) {
  if (name == "adam") return nn::OptimizerConfig::Method::adam;
  if (name == "sgd") return nn::OptimizerConfig::Method::sgd;
  throw std::invalid_argument("unknown optimizer method: " + name);
}

}  // namespace

nlohmann::json run_config_to_json(const RunConfig& cfg) {
  return nlohmann::json{
      {"dataset_dir", cfg.dataset_dir},
      {"model_dir", cfg.model_dir},
      {"report_dir", cfg.report_dir},
      {"params", io::params_to_json(cfg.params)},
      {"noise", io::noise_to_json(cfg.noise)},
      {"generation", datagen::gen_config_to_json(cfg.gen)},
      {"training",
       {{"learning_rate", cfg.training.learning_rate},
        {"batch_size", cfg.training.batch_size},
        {"max_epochs", cfg.training.max_epochs},
        {"patience", cfg.training.patience},
        {"seed", cfg.training.seed},
        {"method", method_name(cfg.training.method)},
        {"max_seconds", cfg.training.max_seconds}}},
      {"master_seed", cfg.master_seed},
      {"jobs", cfg.jobs},
  };
}

RunConfig run_config_from_json(const nlohmann::json& j) {
  RunConfig cfg;
  cfg.dataset_dir = j.at("dataset_dir").get<std::string>();
  cfg.model_dir = j.at("model_dir").get<std::string>();
  cfg.report_dir = j.at("report_dir").get<std::string>();
  cfg.params = io::params_from_json(j.at("params"));
  cfg.noise = io::noise_from_json(j.at("noise"));
  cfg.gen = datagen::gen_config_from_json(j.at("generation"));
  const auto& t = j.at("training");
  cfg.training.learning_rate = t.at("learning_rate").get<double>();
  cfg.training.batch_size = t.at("batch_size").get<int>();
  cfg.training.max_epochs = t.at("max_epochs").get<int>();
  cfg.training.patience = t.at("patience").get<int>();
  cfg.training.seed = t.at("seed").get<std::uint64_t>();
  cfg.training.method = method_from_name(t.at("method").get<std::string>());
  cfg.training.max_seconds = t.at("max_seconds").get<double>();
  cfg.master_seed = j.at("master_seed").get<std::uint64_t>();
  cfg.jobs = j.at("jobs").get<int>();
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  return run_config_from_json(io::load_json_file(path));
}

void save_run_config(const std::string& path, const RunConfig& cfg) {
  io::save_json_file(path, run_config_to_json(cfg));
}

void apply_env_overrides(RunConfig& cfg) {
  if (const char* v = std::getenv("OBSBENCH_DATASET_DIR"))
    cfg.dataset_dir = v;
  if (const char* v = std::getenv("OBSBENCH_MODEL_DIR")) cfg.model_dir = v;
  if (const char* v = std::getenv("OBSBENCH_REPORT_DIR")) cfg.report_dir = v;
}

}  // namespace obsbench::config
