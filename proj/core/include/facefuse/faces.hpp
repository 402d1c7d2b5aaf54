#pragma once

#include <cstdint>
#include <vector>

#include "facefuse/image.hpp"
#include "facefuse/metric.hpp"

// Procedural face-like test images with known five-point landmarks. They
// stand in for a face dataset: smooth shading, sharp facial components and
// fine skin/hair texture that blur removes.
namespace facefuse::faces {

struct FaceSample {
  Image image;
  metric::Landmarks landmarks;
};

// Unit-range RGB image; deterministic per seed.
FaceSample synth_face(int height, int width, std::uint64_t seed);

// Average landmark layout of synth_face for an image of the given size; used
// when a face comes without its own landmark file.
metric::Landmarks canonical_landmarks(int height, int width);

std::vector<FaceSample> synth_faces(int count, int height, int width, std::uint64_t seed);

}  // namespace facefuse::faces
