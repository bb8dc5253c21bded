#include <cmath>
#include <filesystem>

#include <gtest/gtest.h>

#include "esikit/io.hpp"
#include "esikit/synthetic.hpp"

using namespace esi;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  fs::path d = fs::temp_directory_path() / ("esikit_io_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

}  // namespace

TEST(Csv, PointsRoundTripIsByteExact) {
  auto data = synth::cubic_samples(50, 1);
  std::string text = io::format_points_csv(data);
  auto back = io::parse_points_csv(text);
  EXPECT_EQ(back.points(), data.points());
  EXPECT_EQ(back.values(), data.values());
  EXPECT_EQ(io::format_points_csv(back), text);
}

TEST(Csv, DoubleFormattingRoundTrips) {
  for (double v : {0.1, 1.0 / 3, -2.5e-300, 1e300, 0.0, 123456789.125})
    EXPECT_EQ(io::parse_double(io::format_double(v)), v);
  EXPECT_EQ(io::format_double(0.5), "0.5");
  EXPECT_THROW(io::parse_double("1.0x"), IoError);
  EXPECT_THROW(io::parse_double(""), IoError);
}

TEST(Csv, MalformedInputs) {
  EXPECT_THROW(io::parse_points_csv("x0,x1\n1,2\n"), IoError);
  EXPECT_THROW(io::parse_points_csv("x0,value\n1,2\n3\n"), IoError);
  EXPECT_THROW(io::parse_points_csv("x0,value\n1,abc\n"), IoError);
  EXPECT_THROW(io::parse_points_csv(""), IoError);
  EXPECT_THROW(io::parse_points_csv("x0,value\n1,nan\n"), IoError);
  auto crlf = io::parse_points_csv("x0,value\r\n1,2\r\n\r\n");
  EXPECT_EQ(crlf.size(), 1u);
}

TEST(Csv, TargetsIgnoreValueColumn) {
  auto d = scratch_dir("targets");
  io::write_file(d / "t.csv", "x0,x1,value\n0.5,0.25,9\n");
  auto t = io::read_targets_csv(d / "t.csv");
  EXPECT_EQ(t.dim(), 2u);
  EXPECT_EQ(t.size(), 1u);
  EXPECT_EQ(t.row(0)[1], 0.25);
  EXPECT_THROW(io::read_targets_csv(d / "missing.csv"), IoError);
}

TEST(Grid, JsonRoundTrip) {
  auto g = synth::unit_square_grid(100, 200);
  auto j = io::grid_to_json(g.origin, g.step, g.count);
  EXPECT_EQ(io::grid_from_json(j), g.spec());
  EXPECT_THROW(io::grid_from_json(Json::parse(R"({"origin":[0],"step":[1],"count":[2],"extra":1})")),
               InvalidArgument);
  EXPECT_THROW(io::grid_from_json(Json::parse(R"({"origin":[0],"step":[1]})")), InvalidArgument);
}

TEST(Cube, BinaryRoundTripPreservesMissing) {
  SampleCube c(3, 2, {3});
  c.data = {1.5, kMissing, -0.0, 1e-310, 7, kMissing};
  auto bytes = io::encode_cube(c);
  ASSERT_EQ(bytes.size(), 48u);
  EXPECT_EQ(static_cast<unsigned char>(bytes[7]), 0x3F);  // little-endian 1.5
  auto back = io::decode_cube(bytes);
  for (std::size_t i = 0; i < c.data.size(); ++i) {
    if (std::isnan(c.data[i])) EXPECT_TRUE(std::isnan(back[i]));
    else EXPECT_EQ(std::bit_cast<std::uint64_t>(back[i]), std::bit_cast<std::uint64_t>(c.data[i]));
  }
  EXPECT_THROW(io::decode_cube(std::string(7, '\0')), IoError);
}

TEST(Cube, FileRoundTripWithSidecar) {
  auto d = scratch_dir("cube");
  SampleCube c(6, 4, {2, 3});
  for (std::size_t i = 0; i < c.data.size(); ++i) c.data[i] = i % 5 == 0 ? kMissing : 0.1 * static_cast<double>(i);
  EsiConfig cfg;
  cfg.local = KrigingParams{CovarianceModel::gaussian, 0.2, 3.0, 1.5};
  cfg.seed = 77;
  io::write_cube(d / "run", c, cfg);
  auto s = io::read_cube(d / "run");
  EXPECT_EQ(s.config, cfg);
  EXPECT_EQ(s.cube.rows, 6u);
  EXPECT_EQ(s.cube.cols, 4u);
  EXPECT_EQ(s.cube.grid_shape, (std::vector<std::size_t>{2, 3}));
  EXPECT_EQ(io::encode_cube(s.cube), io::encode_cube(c));
  auto side = Json::parse(io::read_file(d / "run.json"));
  EXPECT_EQ(side["dtype"], "float64");
  EXPECT_EQ(side["byte_order"], "little");
  EXPECT_EQ(side["seed"], 77);
  io::write_file(d / "run.bin", std::string(8, '\0'));
  EXPECT_THROW(io::read_cube(d / "run"), IoError);
}

TEST(Config, StrictParsing) {
  EsiConfig c;
  c.p_process = ProcessKind::voronoi;
  c.alpha = 0.95;
  c.local = IdwParams{0.5};
  c.agg_function = "p25";
  EXPECT_EQ(esi_config_from_json(to_json(c)), c);
  EXPECT_THROW(esi_config_from_json(Json::parse(R"({"alpah":0.5})")), InvalidArgument);
  EXPECT_THROW(esi_config_from_json(Json::parse(R"({"local_interpolator":"idw","model":"cubic"})")),
               InvalidArgument);
  EXPECT_THROW(esi_config_from_json(Json::parse(R"({"p_process":"delaunay"})")), InvalidArgument);
  EXPECT_THROW(esi_config_from_json(Json::parse(R"({"p_process":"voronoi","local_interpolator":"kriging"})")),
               Unsupported);
}

TEST(Files, WriteIsAtomic) {
  auto d = scratch_dir("atomic");
  io::write_file(d / "a.txt", "hello");
  EXPECT_EQ(io::read_file(d / "a.txt"), "hello");
  EXPECT_FALSE(fs::exists(d / "a.txt.tmp"));
  EXPECT_THROW(io::write_file(d / "no_such_dir" / "b.txt", "x"), IoError);
}
