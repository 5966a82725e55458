#include <Eigen/Dense>
#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>

#include "doctest.h"
#include "pan/data.hpp"
#include "pan/errors.hpp"

using namespace pan;

namespace {

void put_be32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int shift = 24; shift >= 0; shift -= 8) out.push_back(static_cast<unsigned char>(v >> shift));
}

std::vector<unsigned char> idx_images(std::uint32_t count, std::uint32_t rows, std::uint32_t cols) {
  std::vector<unsigned char> b;
  put_be32(b, 0x00000803);
  put_be32(b, count);
  put_be32(b, rows);
  put_be32(b, cols);
  for (std::uint32_t i = 0; i < count * rows * cols; ++i) b.push_back(static_cast<unsigned char>(i * 37 % 256));
  return b;
}

std::vector<unsigned char> idx_labels(std::uint32_t count) {
  std::vector<unsigned char> b;
  put_be32(b, 0x00000801);
  put_be32(b, count);
  for (std::uint32_t i = 0; i < count; ++i) b.push_back(static_cast<unsigned char>(i % 10));
  return b;
}

std::string message_of(auto&& fn) {
  try {
    fn();
  } catch (const ParseError& e) {
    return e.what();
  }
  return "";
}

std::filesystem::path temp_file(const std::string& name, const std::vector<unsigned char>& bytes) {
  const auto path = std::filesystem::temp_directory_path() / ("pan_test_" + name);
  std::ofstream(path, std::ios::binary).write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  return path;
}

double pearson(const std::vector<int>& a, const std::vector<int>& b) {
  const double n = double(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n, mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

// Ridge regression onto one-hot targets, predicted class = argmax.
double linear_probe_accuracy(const Dataset& train, const std::vector<int>& ytrain, const Dataset& test,
                             const std::vector<int>& ytest, int classes) {
  auto design = [](const Dataset& d) {
    const Index n = d.size(), dim = d.images.size() / n;
    Eigen::MatrixXd x(n, dim + 1);
    for (Index i = 0; i < n; ++i) {
      for (Index j = 0; j < dim; ++j) x(i, j) = d.images[i * dim + j];
      x(i, dim) = 1;
    }
    return x;
  };
  const Eigen::MatrixXd x = design(train);
  Eigen::MatrixXd t = Eigen::MatrixXd::Zero(x.rows(), classes);
  for (Index i = 0; i < x.rows(); ++i) t(i, ytrain[std::size_t(i)]) = 1;
  Eigen::MatrixXd gram = x.transpose() * x;
  gram.diagonal().array() += 1e-2;
  const Eigen::MatrixXd w = gram.ldlt().solve(x.transpose() * t);
  const Eigen::MatrixXd scores = design(test) * w;
  int correct = 0;
  for (Index i = 0; i < scores.rows(); ++i) {
    Index best;
    scores.row(i).maxCoeff(&best);
    correct += best == ytest[std::size_t(i)];
  }
  return double(correct) / double(scores.rows());
}

}  // namespace

TEST_CASE("IDX headers") {
  // First 16 bytes of the public MNIST training image file.
  const std::vector<unsigned char> train_header = {0, 0, 8, 3, 0, 0, 0xea, 0x60, 0, 0, 0, 0x1c, 0, 0, 0, 0x1c};
  const IdxHeader h = parse_idx_header(train_header, "train-images");
  CHECK(h.magic == 0x00000803);
  CHECK(h.dims == std::vector<std::uint32_t>{60000, 28, 28});
  CHECK(h.payload_offset() == 16);

  const IdxHeader l = parse_idx_header(idx_labels(3), "labels");
  CHECK(l.magic == 0x00000801);
  CHECK(l.dims == std::vector<std::uint32_t>{3});

  const IdxHeader desk = parse_idx_header(read_file_bytes(PAN_DATA_DIR "/mnist-desk/images-idx3-ubyte.gz"), "desk");
  CHECK(desk.magic == 0x00000803);
  CHECK(desk.dims == std::vector<std::uint32_t>{5000, 28, 28});
}

TEST_CASE("IDX parsing") {
  const auto bytes = idx_images(2, 3, 4);
  const TensorR images = parse_idx_images(bytes, "img");
  CHECK(images.shape() == Shape{2, 1, 3, 4});
  for (Index i = 0; i < images.size(); ++i) CHECK(images[i] == Real(bytes[16 + std::size_t(i)]) / Real(255));
  CHECK(images.array().minCoeff() >= 0);
  CHECK(images.array().maxCoeff() <= 1);
  CHECK(parse_idx_labels(idx_labels(12), "lab") == std::vector<int>{0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 0, 1});
}

TEST_CASE("IDX errors name a byte offset") {
  CHECK(message_of([] { parse_idx_images({}, "empty"); }).find("byte offset 0") != std::string::npos);

  auto bad = idx_images(1, 2, 2);
  bad[3] = 0x01;
  const std::string magic = message_of([&] { parse_idx_images(bad, "img"); });
  CHECK(magic.find("bad magic 0x00000801") != std::string::npos);
  CHECK(magic.find("byte offset 0") != std::string::npos);
  CHECK_THROWS_AS(parse_idx_labels(idx_images(1, 2, 2), "lab"), ParseError);

  auto truncated = idx_images(2, 3, 3);
  truncated.resize(truncated.size() - 5);
  const std::string cut = message_of([&] { parse_idx_images(truncated, "img"); });
  CHECK(cut.find("truncated payload at byte offset") != std::string::npos);

  const auto images = temp_file("img.idx", idx_images(3, 2, 2));
  const auto labels = temp_file("lab.idx", idx_labels(4));
  const auto empty = temp_file("empty.idx", {});
  CHECK(message_of([&] { load_idx(images.string(), labels.string()); }).find("byte offset") != std::string::npos);
  CHECK_THROWS_AS(load_idx(empty.string(), labels.string()), ParseError);
  CHECK_THROWS_AS(load_idx((images.string() + ".missing"), labels.string()), std::exception);
  std::filesystem::remove(images);
  std::filesystem::remove(labels);
  std::filesystem::remove(empty);
}

TEST_CASE("IDX save/load round trip") {
  Dataset d;
  d.images = TensorR({2, 1, 2, 2}, {0, 1, 0.2f, 0.4f, 1, 1, 0, 0});
  d.labels = {3, 7};
  d.num_classes = 10;
  const auto dir = std::filesystem::temp_directory_path();
  save_idx(d, (dir / "pan_rt_img").string(), (dir / "pan_rt_lab").string());
  const Dataset back = load_idx((dir / "pan_rt_img").string(), (dir / "pan_rt_lab").string());
  CHECK(back.labels == d.labels);
  CHECK((back.images.array() - d.images.array()).abs().maxCoeff() <= 0.5f / 255);
  CHECK(back.train_indices.size() == 2);
  CHECK(back.test_indices.empty());
}

TEST_CASE("MNIST-desk loads in range") {
  const Dataset d =
      load_idx(PAN_DATA_DIR "/mnist-desk/images-idx3-ubyte.gz", PAN_DATA_DIR "/mnist-desk/labels-idx1-ubyte.gz");
  CHECK(d.size() == 5000);
  CHECK(d.sample_shape() == Shape{1, 28, 28});
  CHECK(d.labels.size() == 5000);
  CHECK(d.num_classes == 10);
  CHECK(!d.has_privacy_labels());
  CHECK(d.images.array().minCoeff() >= 0);
  CHECK(d.images.array().maxCoeff() <= 1);
}

TEST_CASE("synthetic dual-label dataset") {
  const Dataset d = make_synthetic_dual(10000, 3);
  CHECK(d.sample_shape() == Shape{1, 16, 16});
  REQUIRE(d.has_privacy_labels());
  CHECK(d.num_classes == 4);
  CHECK(d.num_privacy_classes == 4);
  CHECK(std::abs(pearson(d.labels, *d.privacy_labels)) <= 0.05);
  CHECK(d.images.array().minCoeff() >= 0);
  CHECK(d.images.array().maxCoeff() <= 1);

  // Both labels are linearly readable from raw pixels.
  const Dataset s = split(make_synthetic_dual(3000, 4), 2.0 / 3.0, 4);
  const Dataset train = s.train(), test = s.test();
  const double probe_y = linear_probe_accuracy(train, train.labels, test, test.labels, 4);
  const double probe_z = linear_probe_accuracy(train, *train.privacy_labels, test, *test.privacy_labels, 4);
  MESSAGE("linear probe y=" << probe_y << " z=" << probe_z);
  CHECK(probe_y > 0.6);
  CHECK(probe_z > 0.6);

  const Dataset again = make_synthetic_dual(10000, 3);
  CHECK(again.images.array().cwiseEqual(d.images.array()).all());
  CHECK(again.labels == d.labels);
  CHECK(*again.privacy_labels == *d.privacy_labels);
  CHECK_FALSE(make_synthetic_dual(100, 4).images.array().cwiseEqual(make_synthetic_dual(100, 5).images.array()).all());
}

TEST_CASE("split") {
  Dataset d;
  d.images = TensorR({70000, 1});
  d.labels.assign(70000, 0);
  d.num_classes = 1;
  const Dataset s = split(d, 5.0 / 7.0, 1);
  CHECK(s.train_indices.size() == 50000);
  CHECK(s.test_indices.size() == 20000);
  std::vector<Index> all = s.train_indices;
  all.insert(all.end(), s.test_indices.begin(), s.test_indices.end());
  std::sort(all.begin(), all.end());
  std::vector<Index> expect(70000);
  std::iota(expect.begin(), expect.end(), Index(0));
  CHECK(all == expect);

  CHECK(split(d, 5.0 / 7.0, 1).train_indices == s.train_indices);
  CHECK(split(d, 5.0 / 7.0, 2).train_indices != s.train_indices);
  CHECK(split(d, 1.0, 1).test_indices.empty());
  CHECK_THROWS_AS(split(d, 1.5, 1), ConfigError);
}

TEST_CASE("subsample") {
  const Dataset d = make_synthetic_dual(50, 1);
  const Dataset a = subsample(d, 20, 9);
  CHECK(a.size() == 20);
  CHECK(a.images.array().cwiseEqual(subsample(d, 20, 9).images.array()).all());
  CHECK_THROWS_AS(subsample(d, 51, 9), ConfigError);
}

TEST_CASE("batches") {
  Dataset d = make_synthetic_dual(10, 1);
  const auto b = batches(d, 3, 5, 0);
  REQUIRE(b.size() == 4);
  CHECK(b[0].images.dim(0) == 3);
  CHECK(b[1].images.dim(0) == 3);
  CHECK(b[2].images.dim(0) == 3);
  CHECK(b[3].images.dim(0) == 1);
  CHECK(b[3].labels.size() == 1);
  CHECK(b[3].privacy_labels.size() == 1);

  auto epoch_order = [&](Index epoch) {
    std::vector<Index> order;
    for (const Batch& batch : batches(d, 3, 5, epoch)) order.insert(order.end(), batch.indices.begin(), batch.indices.end());
    return order;
  };
  // Each epoch is a permutation of the samples; the order depends only on (seed, epoch).
  std::set<std::vector<Index>> orders;
  for (Index epoch = 0; epoch < 5; ++epoch) {
    std::vector<Index> order = epoch_order(epoch);
    CHECK(order == epoch_order(epoch));
    orders.insert(order);
    std::sort(order.begin(), order.end());
    std::vector<Index> expect(10);
    std::iota(expect.begin(), expect.end(), Index(0));
    CHECK(order == expect);
  }
  CHECK(orders.size() > 1);

  // Batch contents match the indexed samples.
  for (const Batch& batch : b) {
    for (std::size_t i = 0; i < batch.indices.size(); ++i) {
      const Index src = batch.indices[i];
      CHECK(batch.labels[i] == d.labels[std::size_t(src)]);
      CHECK(batch.images[Index(i) * 256 + 17] == d.images[src * 256 + 17]);
    }
  }
  CHECK_THROWS_AS(batches(d, 0, 5, 0), ConfigError);
}
