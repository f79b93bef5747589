#pragma once

// Long-format CSV ingestion/export and accelerometry-style preprocessing.
//
// Functional file: subject_id, replicate_id, time, value[, invalid]
// Scalar file:     subject_id, y, z_1, ..., z_p

#include <map>
#include <string>
#include <vector>

#include "sofqr/data.hpp"

namespace sofqr {

/// Reads both files into a dense n x J x T dataset on a grid rescaled to
/// [0, 1]. Subjects follow the scalar file's order; replicates follow first
/// appearance. Every (subject, replicate) must cover the common time grid.
FunctionalDataset ingest_long_csv(const std::string& functional_path, const std::string& scalar_path);

/// Writes the dataset in the layout ingest_long_csv reads (17 significant digits).
void export_long_csv(const FunctionalDataset& data, const std::string& functional_path,
                     const std::string& scalar_path);

struct PreprocessOptions {
  double winsorize_pct = 0.999;
  int min_valid_days = 3;
  int max_invalid_minutes = 144;
};

struct PreprocessReport {
  double cap = 0.0;
  long capped_values = 0;
  long dropped_days = 0;
  std::vector<std::string> dropped_subjects;
  int replicates = 0;  // common J kept per subject
  std::map<int, int> valid_day_histogram;  // valid days -> subjects
};

/// Caps values at the global winsorize_pct quantile, drops days with more
/// than max_invalid_minutes invalid entries, drops subjects with fewer than
/// min_valid_days remaining days, and keeps the first J remaining days per
/// subject where J is the smallest count among retained subjects.
FunctionalDataset preprocess_activity(const FunctionalDataset& data, const PreprocessOptions& options,
                                      PreprocessReport* report = nullptr);

/// Averages consecutive blocks of `factor` grid points (a shorter trailing
/// block is averaged as is).
FunctionalDataset downsample(const FunctionalDataset& data, int factor);

}  // namespace sofqr
