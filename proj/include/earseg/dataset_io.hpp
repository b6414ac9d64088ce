#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "earseg/csv.hpp"
#include "earseg/dataset.hpp"
#include "earseg/image_io.hpp"

namespace earseg {

struct ManifestEntry {
  std::string id, image_path, mask_path;
};

// manifest.csv: `id,image_path,mask_path`, paths relative to the manifest.
inline std::vector<ManifestEntry> load_manifest_csv(const std::string& path) {
  CsvTable table = load_csv(path);
  expect_header(table, {"id", "image_path", "mask_path"});
  std::vector<ManifestEntry> entries;
  std::set<std::string> seen;
  for (const auto& row : table.rows) {
    const std::string& id = row.fields[0];
    if (id.empty()) {
      throw std::runtime_error(path + ": line " + std::to_string(row.line) + ": empty sample id");
    }
    if (!seen.insert(id).second) {
      throw std::runtime_error(path + ": line " + std::to_string(row.line) +
                               ": duplicate sample id '" + id + "'");
    }
    entries.push_back({id, row.fields[1], row.fields[2]});
  }
  return entries;
}

// covariates.csv: `id,pitch,roll,yaw,occlusion,gender,ethnicity`.
inline std::map<std::string, Covariates> load_covariates_csv(const std::string& path) {
  CsvTable table = load_csv(path);
  expect_header(table,
                {"id", "pitch", "roll", "yaw", "occlusion", "gender", "ethnicity"});
  std::map<std::string, Covariates> out;
  for (const auto& row : table.rows) {
    Covariates c;
    for (std::size_t f = 0; f < Covariates::kFieldNames.size(); ++f) {
      if (!row.fields[f + 1].empty()) c.field(f) = row.fields[f + 1];
    }
    if (!out.emplace(row.fields[0], std::move(c)).second) {
      throw std::runtime_error(path + ": line " + std::to_string(row.line) +
                               ": duplicate covariate id '" + row.fields[0] + "'");
    }
  }
  return out;
}

// split.csv: `id,split` with split in {train, test}.
inline std::map<std::string, std::string> load_split_csv(const std::string& path) {
  CsvTable table = load_csv(path);
  expect_header(table, {"id", "split"});
  std::map<std::string, std::string> out;
  for (const auto& row : table.rows) {
    if (row.fields[1] != "train" && row.fields[1] != "test") {
      throw std::runtime_error(path + ": line " + std::to_string(row.line) +
                               ": split must be 'train' or 'test', got '" + row.fields[1] + "'");
    }
    if (!out.emplace(row.fields[0], row.fields[1]).second) {
      throw std::runtime_error(path + ": line " + std::to_string(row.line) +
                               ": duplicate split id '" + row.fields[0] + "'");
    }
  }
  return out;
}

inline void save_split_csv(const std::string& path,
                           const std::map<std::string, std::string>& assignment) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << "id,split\n";
  for (const auto& [id, split] : assignment) {
    out << csv_join({id, split}) << "\n";
  }
  if (!out) throw std::runtime_error("failed while writing '" + path + "'");
}

// Loads a dataset directory through its manifest, decoding every raster and
// joining covariates/splits by id. Distinct failures (missing file,
// undecodable raster, image/mask size mismatch, duplicate id) all name the
// offending sample.
inline std::vector<SampleRecord> load_dataset(const std::string& manifest_path,
                                              const std::string& covariates_path = "",
                                              const std::string& split_path = "") {
  namespace fs = std::filesystem;
  const fs::path root = fs::path(manifest_path).parent_path();
  auto resolve = [&root](const std::string& p) {
    const fs::path fp(p);
    return fp.is_absolute() ? fp.string() : (root / fp).string();
  };

  const auto entries = load_manifest_csv(manifest_path);
  std::map<std::string, Covariates> covariates;
  if (!covariates_path.empty()) covariates = load_covariates_csv(covariates_path);
  std::map<std::string, std::string> splits;
  if (!split_path.empty()) splits = load_split_csv(split_path);

  std::vector<SampleRecord> records;
  records.reserve(entries.size());
  for (const auto& e : entries) {
    const std::string image_file = resolve(e.image_path);
    const std::string mask_file = resolve(e.mask_path);
    if (!fs::exists(image_file)) {
      throw std::runtime_error("sample '" + e.id + "': image file '" + image_file +
                               "' not found");
    }
    if (!fs::exists(mask_file)) {
      throw std::runtime_error("sample '" + e.id + "': mask file '" + mask_file + "' not found");
    }
    SampleRecord rec;
    rec.id = e.id;
    try {
      rec.image = load_image_rgb(image_file);
      rec.mask = load_mask(mask_file);
    } catch (const std::exception& ex) {
      throw std::runtime_error("sample '" + e.id + "': " + ex.what());
    }
    if (rec.image.width != rec.mask.width || rec.image.height != rec.mask.height) {
      throw std::runtime_error("sample '" + e.id + "': image is " +
                               std::to_string(rec.image.width) + "x" +
                               std::to_string(rec.image.height) + " but mask is " +
                               std::to_string(rec.mask.width) + "x" +
                               std::to_string(rec.mask.height));
    }
    if (auto it = covariates.find(e.id); it != covariates.end()) rec.covariates = it->second;
    if (auto it = splits.find(e.id); it != splits.end()) rec.split = it->second;
    records.push_back(std::move(rec));
  }
  return records;
}

// Writes records as a self-contained dataset directory (images/, masks/,
// manifest.csv, covariates.csv, split.csv) loadable by load_dataset.
inline void save_dataset(const std::string& dir, const std::vector<SampleRecord>& records) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(dir) / "images");
  fs::create_directories(fs::path(dir) / "masks");

  std::ofstream manifest(fs::path(dir) / "manifest.csv", std::ios::trunc);
  std::ofstream covs(fs::path(dir) / "covariates.csv", std::ios::trunc);
  std::ofstream split(fs::path(dir) / "split.csv", std::ios::trunc);
  if (!manifest || !covs || !split) {
    throw std::runtime_error("cannot create dataset files under '" + dir + "'");
  }
  manifest << "id,image_path,mask_path\n";
  covs << "id,pitch,roll,yaw,occlusion,gender,ethnicity\n";
  split << "id,split\n";
  for (const auto& rec : records) {
    const std::string image_rel = "images/" + rec.id + ".png";
    const std::string mask_rel = "masks/" + rec.id + ".png";
    save_image_rgb((fs::path(dir) / image_rel).string(), rec.image);
    save_mask((fs::path(dir) / mask_rel).string(), rec.mask);
    manifest << csv_join({rec.id, image_rel, mask_rel}) << "\n";
    covs << csv_join({rec.id, rec.covariates.pitch, rec.covariates.roll, rec.covariates.yaw,
                      rec.covariates.occlusion, rec.covariates.gender, rec.covariates.ethnicity})
         << "\n";
    split << csv_join({rec.id, rec.split}) << "\n";
  }
  if (!manifest || !covs || !split) {
    throw std::runtime_error("failed while writing dataset files under '" + dir + "'");
  }
}

}  // namespace earseg
