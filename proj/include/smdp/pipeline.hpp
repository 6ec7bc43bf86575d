/*
 * pipeline.hpp
 *
 * Stage drivers behind the CLI: abstract -> certify -> compose -> bound ->
 * synthesize -> simulate -> report. Each stage reads its upstream artifacts
 * from the output directory and writes its own atomically, so stages can be
 * re-run in isolation.
 */

#ifndef SMDP_PIPELINE_HPP_
#define SMDP_PIPELINE_HPP_

#include <filesystem>
#include <string>

#include "smdp/config.hpp"

namespace smdp {

class StageError : public std::runtime_error {
 public:
  StageError(std::string stage, const std::string& what)
      : std::runtime_error(what), stage_name(std::move(stage)) {}
  std::string stage_name;
};

struct StageContext {
  ProjectConfig cfg;
  std::filesystem::path out;
  unsigned threads = 0;

  static StageContext from_config(const ProjectConfig& cfg, unsigned threads = 0);
};

void cmd_abstract(const StageContext& ctx);
void cmd_certify(const StageContext& ctx);
void cmd_compose(const StageContext& ctx);
void cmd_bound(const StageContext& ctx);
void cmd_synthesize(const StageContext& ctx);
void cmd_simulate(const StageContext& ctx);
void cmd_report(const StageContext& ctx);
void cmd_run(const StageContext& ctx);  /* all stages in order */

/* artifact paths, shared by stages and tests */
std::filesystem::path abstraction_path(const StageContext& ctx, int subsystem);
std::filesystem::path certificate_path(const StageContext& ctx);
std::filesystem::path composition_path(const StageContext& ctx);
std::filesystem::path policy_path(const StageContext& ctx, int subsystem);

/* write-to-temporary-then-rename */
void atomic_write_text(const std::filesystem::path& path, const std::string& content);

}  // namespace smdp

#endif
