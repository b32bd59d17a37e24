#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "pluralis/csv.hpp"
#include "pluralis/harness.hpp"

namespace pluralis::detail {

/// Collects the files a run writes so a failure can remove them.
struct OutputSink {
  std::filesystem::path dir;
  std::vector<std::string> written;

  void write(const std::string& name, const CsvWriter& csv);
};

void run_kind(const ExperimentSpec& spec, OutputSink& sink);

}  // namespace pluralis::detail
