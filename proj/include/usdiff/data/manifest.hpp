#pragma once

#include <span>
#include <string>

#include "usdiff/data/dataset.hpp"

namespace usdiff::data {

/// Dataset directory: manifest.json plus images/<n>.png and masks/<n>.png.
/// The manifest lists id, class, split, source, file stem and content hash
/// per sample, together with per-class counts and the seed.
void save_manifest(const Dataset& d, const std::string& dir);

/// Loads and checks a dataset directory: counts must match the sample list
/// and every sample's rasters must hash to the recorded value.
Dataset load_manifest(const std::string& dir);

/// Order-independent hash of the content hashes of the given samples.
std::string dataset_hash(const Dataset& d, std::span<const std::size_t> idx);

}  // namespace usdiff::data
