// Regenerates the shipped synthetic corpora under data/.
#include <filesystem>
#include <iostream>

#include "lvap/io.hpp"
#include "synth.hpp"

int main(int argc, char** argv) {
  const std::filesystem::path root = argc > 1 ? argv[1] : "data";
  const auto dir = root / "gameable";
  std::filesystem::create_directories(dir);
  const auto [dataset, dets] = lvap::synth::gameable_corpus();
  lvap::write_dataset(dataset, dir / "gt.json");
  lvap::write_detections(dets, dir / "dets.json");
  std::cout << "wrote " << dir.string() << " (" << dataset.images().size() << " images, "
            << dataset.categories().size() << " categories, " << dets.size() << " detections)\n";
  return 0;
}
