#pragma once

#include <string>
#include <vector>

#include "usdiff/data/dataset.hpp"

namespace usdiff::data {

struct IngestResult {
  Dataset dataset;
  /// One line per skipped file: "<path>: <reason>".
  std::vector<std::string> issues;
};

/// Reads the BUSI layout: normal/, benign/, malignant/ holding
/// "<class> (<k>).png" with "<class> (<k>)_mask.png" and optional
/// "_mask_<n>.png" extras (merged by pixelwise max). Images are letterboxed to
/// square (edge padding; masks zero-padded), area-resized to image_size,
/// mapped to [-1, 1]; masks are binarized at 0.5. Unreadable or inconsistent
/// files are skipped and reported in `issues`.
IngestResult ingest_busi(const std::string& dir, int image_size = 64);

/// Writes `d` in the BUSI layout, numbering each class from 1 in sample order.
void export_busi_layout(const Dataset& d, const std::string& dir);

/// Area-weighted resize of a square raster (values in any range).
std::vector<double> resize_area(const std::vector<double>& src, int from, int to);

}  // namespace usdiff::data
