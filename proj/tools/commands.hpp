#pragma once

#include <filesystem>
#include <vector>

#include "run_config.hpp"

namespace evloop::cli {

namespace fs = std::filesystem;

// Each returns the process exit status; errors propagate as exceptions and
// are mapped to exit codes by main.
int cmd_gen_data(const RunConfig& cfg, const fs::path& out_dir);
int cmd_train(const RunConfig& cfg, const fs::path& data_dir, const fs::path& out_model);
int cmd_grade(const fs::path& model_dir, const fs::path& data_dir, const fs::path& out_dir);
int cmd_explain(const RunConfig& cfg, const fs::path& model_dir, const fs::path& image_path,
                bool augment, const fs::path& out_dir);
int cmd_eval_froc(const RunConfig& cfg, const fs::path& model_dir, const fs::path& data_dir,
                  bool augment, const fs::path& out_dir);
int cmd_report(const std::vector<fs::path>& inputs, const fs::path& out_dir);

}  // namespace evloop::cli
