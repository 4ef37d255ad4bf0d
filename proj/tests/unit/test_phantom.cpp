#include <fstream>

#include "doctest.h"
#include "helpers.hpp"
#include "splitct/phantom.hpp"

using namespace splitct;

TEST_CASE("phantoms are deterministic, bounded and separated by material") {
  PhantomConfig pc;
  pc.size = 32;
  pc.seed = 4;
  const MaterialImage a = generate_phantom(pc);
  CHECK(a.materials == 3);
  CHECK(a.height == 32);
  CHECK(generate_phantom(pc).data == a.data);
  pc.seed = 5;
  CHECK(generate_phantom(pc).data != a.data);
  double water = 0, iodine = 0, gad = 0;
  for (int r = 0; r < 32; ++r) {
    for (int c = 0; c < 32; ++c) {
      CHECK(a.at(kWater, r, c) >= 0.0);
      CHECK(a.at(kWater, r, c) <= 1.1);
      CHECK(a.at(kIodine, r, c) >= 0.0);
      CHECK(a.at(kGadolinium, r, c) >= 0.0);
      water += a.at(kWater, r, c);
      iodine += a.at(kIodine, r, c);
      gad += a.at(kGadolinium, r, c);
    }
  }
  CHECK(water > 0.0);
  CHECK(iodine > 0.0);
  CHECK(gad > 0.0);
  // Corners lie outside the head.
  CHECK(a.at(kWater, 0, 0) == 0.0);
  CHECK(a.at(kIodine, 31, 31) == 0.0);
}

TEST_CASE("zero deformation is seed independent") {
  PhantomConfig pc;
  pc.size = 24;
  pc.deform_amplitude = 0.0;
  pc.seed = 1;
  const MaterialImage a = generate_phantom(pc);
  pc.seed = 2;
  CHECK(generate_phantom(pc).data == a.data);
}

TEST_CASE("phantom config validation") {
  PhantomConfig pc;
  pc.contrast_scale = 0.5;
  CHECK_THROWS_AS(pc.validate(), ContractError);
  pc = PhantomConfig{};
  pc.deform_amplitude = 0.4;
  CHECK_THROWS_AS(pc.validate(), ContractError);
}

TEST_CASE("dataset directory with manifest") {
  const auto dir = testutil::temp_dir("dataset");
  PhantomConfig pc;
  pc.size = 16;
  pc.seed = 3;
  const DatasetManifest m = generate_dataset(pc, 2, 1, 1, dir);
  CHECK(m.entries.size() == 4);
  CHECK(m.split("train").size() == 2);
  CHECK(m.split("test").size() == 1);
  const DatasetManifest back = read_manifest(dir);
  REQUIRE(back.entries.size() == 4);
  CHECK(back.entries[0].file == m.entries[0].file);
  const MaterialImage img = read_material_image(dir / m.entries[0].file);
  CHECK(img.height == 16);
  CHECK_THROWS_AS(generate_dataset(pc, 1, 1, 1, dir), IoError);
  CHECK_NOTHROW(generate_dataset(pc, 1, 1, 1, dir, true));
  CHECK(read_manifest(dir).entries.size() == 3);
  CHECK_THROWS_AS(generate_dataset(pc, 0, 1, 1, testutil::temp_dir("dataset_empty")), ContractError);
}
