#include "ddflow/data/dataset.hpp"

#include "ddflow/io/flow_io.hpp"
#include "ddflow/io/png.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace fs = std::filesystem;

namespace ddflow {
namespace {

std::string numbered(const char* stem, std::size_t i, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s_%05zu%s", stem, i, ext);
  return buf;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  return out;
}

}  // namespace

void write_dataset(const std::string& dir, const std::vector<LabeledPair>& pairs, std::uint64_t seed) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create " + dir + ": " + ec.message());
  std::ofstream manifest(fs::path(dir) / "manifest.csv");
  if (!manifest) throw std::runtime_error("cannot write " + (fs::path(dir) / "manifest.csv").string());
  manifest << kManifestHeader << "\n";
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const LabeledPair& p = pairs[i];
    ManifestEntry e{seed, i, numbered("frame1", i, ".png"), numbered("frame2", i, ".png"),
                    numbered("flow_f", i, ".flo"), numbered("flow_b", i, ".flo"),
                    numbered("occ_f", i, ".png"), numbered("occ_b", i, ".png")};
    const fs::path d(dir);
    write_png((d / e.frame1).string(), p.i1);
    write_png((d / e.frame2).string(), p.i2);
    write_flo((d / e.flow_f).string(), p.flow_f);
    write_flo((d / e.flow_b).string(), p.flow_b);
    write_png((d / e.occ_f).string(), p.occ_f);
    write_png((d / e.occ_b).string(), p.occ_b);
    manifest << e.index << "," << e.seed << "," << e.frame1 << "," << e.frame2 << "," << e.flow_f << "," << e.flow_b
             << "," << e.occ_f << "," << e.occ_b << "\n";
  }
  if (!manifest) throw std::runtime_error("write failed for manifest in " + dir);
}

std::vector<ManifestEntry> read_manifest(const std::string& dir) {
  const fs::path path = fs::path(dir) / "manifest.csv";
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kManifestHeader) {
    throw std::runtime_error(path.string() + ": unexpected header, expected " + kManifestHeader);
  }
  std::vector<ManifestEntry> out;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != 8) throw std::runtime_error(path.string() + ": row " + std::to_string(row) + " has " +
                                                    std::to_string(cells.size()) + " columns, expected 8");
    ManifestEntry e;
    try {
      e.index = std::stoull(cells[0]);
      e.seed = std::stoull(cells[1]);
    } catch (const std::exception&) {
      throw std::runtime_error(path.string() + ": row " + std::to_string(row) + " has a malformed number");
    }
    e.frame1 = cells[2];
    e.frame2 = cells[3];
    e.flow_f = cells[4];
    e.flow_b = cells[5];
    e.occ_f = cells[6];
    e.occ_b = cells[7];
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<LabeledPair> read_dataset(const std::string& dir) {
  const fs::path d(dir);
  std::vector<LabeledPair> out;
  for (const ManifestEntry& e : read_manifest(dir)) {
    LabeledPair p;
    p.i1 = read_image((d / e.frame1).string());
    p.i2 = read_image((d / e.frame2).string());
    p.flow_f = read_flo((d / e.flow_f).string());
    p.flow_b = read_flo((d / e.flow_b).string());
    p.occ_f = read_occlusion_png((d / e.occ_f).string());
    p.occ_b = read_occlusion_png((d / e.occ_b).string());
    const Index h = p.i1.height(), w = p.i1.width();
    for (auto [hh, ww] : {std::pair{p.i2.height(), p.i2.width()}, std::pair{p.flow_f.height(), p.flow_f.width()},
                          std::pair{p.flow_b.height(), p.flow_b.width()}, std::pair{p.occ_f.height(), p.occ_f.width()},
                          std::pair{p.occ_b.height(), p.occ_b.width()}}) {
      if (hh != h || ww != w) throw std::runtime_error(dir + ": pair " + std::to_string(e.index) + " has mismatched extents");
    }
    p.valid = FlowValidity(h, w, true);
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace ddflow
