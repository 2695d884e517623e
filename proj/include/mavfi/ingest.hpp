// SPDX-License-Identifier: Apache-2.0
//
// Loads a directory of triplet folders:
//
//   root/<sample>/im1.png  im2.png  im3.png   (frame 0, middle frame, frame 1)
//   root/<sample>/flow_t0.flo flow_t1.flo     (optional, middle -> ends)
//
// Any three .png/.ppm/.pgm files are accepted; they are ordered by name.
// Malformed folders are reported individually and do not stop the others.
#pragma once

#include <algorithm>
#include <filesystem>
#include <string>
#include <vector>

#include "mavfi/io.hpp"
#include "mavfi/synth.hpp"

namespace mavfi {

struct IngestIssue {
  std::string sample;
  std::string message;
};

struct IngestResult {
  std::vector<Triplet<float>> triplets;
  std::vector<IngestIssue> issues;
};

inline constexpr const char* kFlowToStart = "flow_t0.flo";
inline constexpr const char* kFlowToEnd = "flow_t1.flo";

namespace detail {

inline bool is_image_file(const std::filesystem::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext == ".png" || ext == ".ppm" || ext == ".pgm";
}

inline Triplet<float> load_triplet_folder(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  std::vector<fs::path> images;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && is_image_file(e.path())) images.push_back(e.path());
  std::sort(images.begin(), images.end());
  if (images.size() != 3)
    throw FormatError("expected 3 images, found " + std::to_string(images.size()));

  Triplet<float> tr;
  tr.name = dir.filename().string();
  tr.i0 = io::read_image(images[0]);
  tr.it = io::read_image(images[1]);
  tr.i1 = io::read_image(images[2]);
  const auto& s = tr.i0.tensor().shape();
  if (tr.it.tensor().shape() != s || tr.i1.tensor().shape() != s)
    throw FormatError("image sizes differ: " + shape_str(s) + ", " + shape_str(tr.it.tensor().shape()) + ", " +
                      shape_str(tr.i1.tensor().shape()));

  const fs::path f0 = dir / kFlowToStart, f1 = dir / kFlowToEnd;
  const bool h0 = fs::exists(f0), h1 = fs::exists(f1);
  if (h0 != h1) throw FormatError(std::string("flow files must come in pairs (") + kFlowToStart + ", " + kFlowToEnd + ")");
  if (h0) {
    tr.gt_to0 = io::read_flo(f0);
    tr.gt_to1 = io::read_flo(f1);
    for (const auto* f : {&tr.gt_to0, &tr.gt_to1})
      if (f->height() != tr.i0.height() || f->width() != tr.i0.width())
        throw FormatError("flow size " + std::to_string(f->width()) + "x" + std::to_string(f->height()) +
                          " does not match image size " + std::to_string(tr.i0.width()) + "x" +
                          std::to_string(tr.i0.height()));
  }
  return tr;
}

}  // namespace detail

/// Every subdirectory of `root` (sorted by name) is one sample; plain files at
/// the top level, such as a manifest, are ignored.
inline IngestResult ingest_triplet_dir(const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(root)) throw FormatError("dataset directory not found: " + root.string());
  std::vector<fs::path> dirs;
  for (const auto& e : fs::directory_iterator(root))
    if (e.is_directory()) dirs.push_back(e.path());
  std::sort(dirs.begin(), dirs.end());

  IngestResult out;
  for (const auto& d : dirs) {
    try {
      out.triplets.push_back(detail::load_triplet_folder(d));
    } catch (const std::exception& e) {
      out.issues.push_back({d.filename().string(), e.what()});
    }
  }
  return out;
}

/// Writes a triplet in the layout read by ingest_triplet_dir.
template <class T>
void write_triplet_folder(const Triplet<T>& tr, const std::filesystem::path& dir) {
  io::write_image(tr.i0, dir / "im1.png");
  io::write_image(tr.it, dir / "im2.png");
  io::write_image(tr.i1, dir / "im3.png");
  if (tr.has_flows()) {
    io::write_flo(FlowField<float>(tr.gt_to0.tensor().template cast<float>()), dir / kFlowToStart);
    io::write_flo(FlowField<float>(tr.gt_to1.tensor().template cast<float>()), dir / kFlowToEnd);
  }
}

}  // namespace mavfi
