#pragma once

#include <string>
#include <vector>

namespace gbm {

// Entry point behind the `gbm` binary. Dispatches one subcommand of
// {ingest, preprocess, train, evaluate, segment, report} and maps errors to
// exit codes: 0 success, 1 validation/configuration, 2 I/O, 3 training abort.
// Every successful run leaves a reproducibility record (resolved config,
// seeds, artifact hashes) beside its outputs.
int run_command(const std::vector<std::string>& args);
int run_command(int argc, const char* const* argv);

// Number of worker threads for data-parallel stages: GBM_NUM_WORKERS when
// set (must be a positive integer), else the logical processor count.
int num_workers();

// Aligned text rendering of a classification confusion matrix plus the
// derived metrics, as emitted by the `report` subcommand.
std::string format_report_text(const std::string& report_json_text);

}  // namespace gbm
