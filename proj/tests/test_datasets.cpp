#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "cvfl/dataset.hpp"
#include "cvfl/learner.hpp"

using namespace cvfl;

namespace {

struct WarnCapture {
  std::vector<std::string> messages;
  WarnHandler previous;
  WarnCapture() {
    previous = set_warn_handler([this](const std::string& m) { messages.push_back(m); });
  }
  ~WarnCapture() { set_warn_handler(previous); }
};

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / name;
}

void write_bytes(const std::filesystem::path& path, const std::vector<unsigned char>& bytes) {
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), bytes.size());
}

void push_be_u32(std::vector<unsigned char>& v, std::uint32_t x) {
  v.push_back((x >> 24) & 0xFF);
  v.push_back((x >> 16) & 0xFF);
  v.push_back((x >> 8) & 0xFF);
  v.push_back(x & 0xFF);
}

}  // namespace

TEST_CASE("synthetic dataset is balanced and deterministic", "[datasets]") {
  const auto ds = synth_dataset(2, 2, 100, 5);
  REQUIRE(ds.size() == 100);
  REQUIRE(ds.dims == 2);
  int count0 = 0;
  for (int y : ds.labels) count0 += (y == 0);
  CHECK(count0 == 50);

  const auto again = synth_dataset(2, 2, 100, 5);
  CHECK(ds.features == again.features);
  CHECK(ds.labels == again.labels);

  const auto other = synth_dataset(2, 2, 100, 6);
  CHECK(ds.features != other.features);
}

TEST_CASE("synthetic dataset rejects bad sizes", "[datasets]") {
  CHECK_THROWS_AS(synth_dataset(1, 2, 100, 5), ConfigError);
  CHECK_THROWS_AS(synth_dataset(2, 0, 100, 5), ConfigError);
  CHECK_THROWS_AS(synth_dataset(10, 2, 5, 5), ConfigError);
}

TEST_CASE("a small classifier separates the synthetic clusters", "[datasets]") {
  const auto ds = synth_dataset(2, 2, 100, 5);
  ModelArch arch{2, {16}, 2};
  auto params = init_params(arch, 1);
  for (int e = 0; e < 30; ++e) {
    const auto u = local_train(params, ds, 1, 0.1, 10, 100 + e);
    for (std::size_t i = 0; i < params.theta.size(); ++i) params.theta[i] += u.delta[i];
  }
  CHECK(evaluate_accuracy(params, ds) >= 0.95);
}

TEST_CASE("idx loader reads a hand-built fixture exactly", "[datasets]") {
  const auto img_path = temp_file("cvfl_idx_images.bin");
  const auto lab_path = temp_file("cvfl_idx_labels.bin");

  std::vector<unsigned char> img;
  push_be_u32(img, 0x00000803u);
  push_be_u32(img, 2);  // two images
  push_be_u32(img, 2);  // rows
  push_be_u32(img, 2);  // cols
  for (unsigned char p : {0, 51, 102, 153, 204, 255, 10, 20}) img.push_back(p);
  write_bytes(img_path, img);

  std::vector<unsigned char> lab;
  push_be_u32(lab, 0x00000801u);
  push_be_u32(lab, 2);
  lab.push_back(3);
  lab.push_back(1);
  write_bytes(lab_path, lab);

  const auto ds = load_idx(img_path.string(), lab_path.string());
  REQUIRE(ds.size() == 2);
  REQUIRE(ds.dims == 4);
  CHECK(ds.labels == std::vector<int>{3, 1});
  CHECK(ds.num_classes == 4);
  const std::vector<double> expected = {0.0 / 255.0,   51.0 / 255.0, 102.0 / 255.0,
                                        153.0 / 255.0, 204.0 / 255.0, 255.0 / 255.0,
                                        10.0 / 255.0,  20.0 / 255.0};
  CHECK(ds.features == expected);

  std::filesystem::remove(img_path);
  std::filesystem::remove(lab_path);
}

TEST_CASE("idx loader rejects malformed files", "[datasets]") {
  const auto img_path = temp_file("cvfl_idx_bad_images.bin");
  const auto lab_path = temp_file("cvfl_idx_bad_labels.bin");

  std::vector<unsigned char> lab;
  push_be_u32(lab, 0x00000801u);
  push_be_u32(lab, 2);
  lab.push_back(0);
  lab.push_back(1);
  write_bytes(lab_path, lab);

  SECTION("bad magic") {
    std::vector<unsigned char> img;
    push_be_u32(img, 0x00000804u);
    push_be_u32(img, 2);
    push_be_u32(img, 2);
    push_be_u32(img, 2);
    img.resize(img.size() + 8, 0);
    write_bytes(img_path, img);
    CHECK_THROWS_AS(load_idx(img_path.string(), lab_path.string()), FormatError);
  }
  SECTION("truncated pixel data") {
    std::vector<unsigned char> img;
    push_be_u32(img, 0x00000803u);
    push_be_u32(img, 2);
    push_be_u32(img, 2);
    push_be_u32(img, 2);
    img.resize(img.size() + 5, 0);  // needs 8 pixel bytes
    write_bytes(img_path, img);
    CHECK_THROWS_AS(load_idx(img_path.string(), lab_path.string()), FormatError);
  }
  SECTION("count mismatch") {
    std::vector<unsigned char> img;
    push_be_u32(img, 0x00000803u);
    push_be_u32(img, 3);
    push_be_u32(img, 2);
    push_be_u32(img, 2);
    img.resize(img.size() + 12, 0);
    write_bytes(img_path, img);
    CHECK_THROWS_AS(load_idx(img_path.string(), lab_path.string()), FormatError);
  }

  std::filesystem::remove(img_path);
  std::filesystem::remove(lab_path);
}

TEST_CASE("shard partition with the full-scale defaults", "[datasets]") {
  const auto ds = synth_dataset(10, 2, 60000, 21);
  PartitionSpec spec;  // 1200 shards of 50, 1..30 per vehicle
  const auto part = partition_shards(ds, 30, spec, 77);

  REQUIRE(part.vehicle_data.size() == 30);
  std::multiset<std::size_t> all_indices;
  int assigned_shards = 0;
  for (int s : part.shard_to_vehicle)
    if (s >= 0) ++assigned_shards;

  std::size_t total_samples = 0;
  for (int k = 0; k < 30; ++k) {
    const auto& d = part.vehicle_data[k];
    CHECK(d.size() >= 50);
    CHECK(d.size() <= 1500);
    CHECK(d.size() % 50 == 0);

    // single-label shards: distinct labels bounded by the shard count
    std::set<int> labels(d.labels.begin(), d.labels.end());
    CHECK(labels.size() <= d.size() / 50);

    for (std::size_t idx : part.vehicle_samples[k]) all_indices.insert(idx);
    total_samples += d.size();
  }
  CHECK(total_samples == static_cast<std::size_t>(assigned_shards) * 50);
  CHECK(all_indices.size() == total_samples);
  for (auto idx : all_indices) CHECK(all_indices.count(idx) == 1);  // no sample twice

  const auto again = partition_shards(ds, 30, spec, 77);
  CHECK(again.shard_to_vehicle == part.shard_to_vehicle);

  const auto index = partition_index_json(part);
  CHECK(index.at("shard_to_vehicle").size() == 1200);
  CHECK(index.at("shard_size").get<int>() == 50);
}

TEST_CASE("shard partition rescales an oversized demand", "[datasets]") {
  const auto ds = synth_dataset(10, 2, 3000, 3);
  PartitionSpec spec;
  spec.num_shards = 60;
  spec.shard_size = 50;
  spec.min_shards = 1;
  spec.max_shards = 30;

  WarnCapture warns;
  const auto part = partition_shards(ds, 10, spec, 5);
  CHECK(!warns.messages.empty());
  std::size_t total = 0;
  for (const auto& d : part.vehicle_data) total += d.size();
  CHECK(total <= 3000);
  for (const auto& d : part.vehicle_data) CHECK(d.size() >= 50);
}

TEST_CASE("shard partition rejects impossible demand", "[datasets]") {
  const auto ds = synth_dataset(10, 2, 3000, 3);
  PartitionSpec spec;
  spec.num_shards = 60;
  spec.shard_size = 50;
  spec.min_shards = 10;  // 100 vehicles x 10 > 60 shards
  spec.max_shards = 30;
  CHECK_THROWS_AS(partition_shards(ds, 100, spec, 5), ConfigError);
}

TEST_CASE("concept shift identity and involution", "[datasets]") {
  const auto ds = synth_dataset(10, 2, 500, 9);
  PartitionSpec spec;
  spec.num_shards = 10;
  spec.shard_size = 50;
  spec.min_shards = 1;
  spec.max_shards = 2;
  auto part = partition_shards(ds, 4, spec, 11);

  SECTION("one group with no pairs changes nothing") {
    ConceptShiftSpec none;
    none.group_swaps = {{}};
    const auto shifted = apply_concept_shift(part.vehicle_data, none);
    for (std::size_t k = 0; k < shifted.data.size(); ++k) {
      CHECK(shifted.data[k].labels == part.vehicle_data[k].labels);
      CHECK(shifted.data[k].features == part.vehicle_data[k].features);
      CHECK(shifted.group_of_vehicle[k] == 0);
    }
  }

  SECTION("applying the same swaps twice restores the labels") {
    ConceptShiftSpec spec2;
    spec2.group_swaps = {{{1, 7}}, {{3, 5}}};
    const auto once = apply_concept_shift(part.vehicle_data, spec2);
    const auto twice = apply_concept_shift(once.data, spec2);
    for (std::size_t k = 0; k < twice.data.size(); ++k) {
      CHECK(twice.data[k].labels == part.vehicle_data[k].labels);
      CHECK(twice.data[k].features == part.vehicle_data[k].features);
    }
    CHECK(once.group_of_vehicle == std::vector<int>{0, 0, 1, 1});
  }
}

TEST_CASE("concept shift swaps exactly the configured pair", "[datasets]") {
  LabeledDataset only_ones;
  only_ones.dims = 1;
  only_ones.num_classes = 10;
  only_ones.features = {0.1, 0.2, 0.3};
  only_ones.labels = {1, 1, 1};

  ConceptShiftSpec spec;
  spec.group_swaps = {{{1, 7}}};
  const auto shifted = apply_concept_shift({only_ones}, spec);
  CHECK(shifted.data[0].labels == std::vector<int>{7, 7, 7});
  CHECK(shifted.data[0].features == only_ones.features);
}

TEST_CASE("concept shift spec validation", "[datasets]") {
  ConceptShiftSpec bad;
  bad.group_swaps = {{{1, 12}}};
  CHECK_THROWS_AS(bad.validate(10), ConfigError);
  ConceptShiftSpec repeated;
  repeated.group_swaps = {{{1, 7}, {7, 3}}};
  CHECK_THROWS_AS(repeated.validate(10), ConfigError);
}

TEST_CASE("label entropy", "[datasets]") {
  LabeledDataset single;
  single.dims = 1;
  single.num_classes = 10;
  single.features = {0, 0, 0};
  single.labels = {4, 4, 4};
  CHECK(label_entropy(single) == Catch::Approx(0.0).margin(1e-12));

  LabeledDataset uniform;
  uniform.dims = 1;
  uniform.num_classes = 10;
  uniform.features.assign(10, 0.0);
  for (int c = 0; c < 10; ++c) uniform.labels.push_back(c);
  CHECK(label_entropy(uniform) == Catch::Approx(std::log(10.0)).epsilon(1e-12));
}

TEST_CASE("diversity index fixtures", "[datasets]") {
  SECTION("single vehicle collapses to zero") {
    const std::vector<DatasetMeta> fleet = {{100, 1.0, 2.0}};
    CHECK(diversity_index(fleet) == std::vector<double>{0.0});
  }

  SECTION("two vehicles hit the min-max endpoints") {
    const std::vector<DatasetMeta> fleet = {{100, 0.0, 0.0}, {100, std::log(10.0), 0.0}};
    const auto idx = diversity_index(fleet, {1.0, 0.0, 0.0});
    CHECK(idx[0] == Catch::Approx(0.0).margin(1e-12));
    CHECK(idx[1] == Catch::Approx(1.0).margin(1e-12));
  }

  SECTION("three vehicle hand computation") {
    const std::vector<DatasetMeta> fleet = {
        {100, 0.5, 0.0}, {200, 1.0, 0.0}, {300, 0.75, 0.0}};
    const auto idx = diversity_index(fleet, {0.5, 0.5, 0.0});
    CHECK(idx[0] == Catch::Approx(0.0).margin(1e-12));
    CHECK(idx[1] == Catch::Approx(0.75).margin(1e-12));
    CHECK(idx[2] == Catch::Approx(0.75).margin(1e-12));
  }
}

TEST_CASE("diversity index is invariant to affine metric rescaling", "[datasets]") {
  Rng rng(13);
  std::vector<DatasetMeta> fleet;
  for (int i = 0; i < 8; ++i)
    fleet.push_back({static_cast<std::size_t>(rng.uniform_int(50, 2000)),
                     rng.uniform(0.0, 2.3), rng.uniform(0.0, 10.0)});
  const auto base = diversity_index(fleet);

  auto scaled = fleet;
  for (auto& m : scaled) m.label_entropy_nats = 3.0 * m.label_entropy_nats + 5.0;
  const auto rescaled = diversity_index(scaled);

  for (std::size_t i = 0; i < base.size(); ++i) {
    CHECK(rescaled[i] == Catch::Approx(base[i]).margin(1e-12));
    CHECK(base[i] >= 0.0);
    CHECK(base[i] <= 1.0);
  }
}

TEST_CASE("diversity index input validation", "[datasets]") {
  CHECK_THROWS_AS(diversity_index({}), DomainError);
  const std::vector<DatasetMeta> fleet = {{10, 0.5, 0.0}, {20, 0.1, 1.0}};
  CHECK_THROWS_AS(diversity_index(fleet, {0.9, 0.2, 0.2}), ConfigError);
  CHECK_THROWS_AS(diversity_index(fleet, {-0.2, 1.0, 0.2}), ConfigError);
}
