#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <limits>

#include "depthfill/raster.hpp"

using namespace depthfill;
using Catch::Approx;

TEST_CASE("decode_disparity follows the dataset convention") {
    CHECK_FALSE(decode_disparity(0).has_value());  // p = 0 is an invalid measurement
    CHECK(*decode_disparity(1) == 0.0);
    CHECK(*decode_disparity(513) == 2.0);
    CHECK(*decode_disparity(257) == 1.0);
    CHECK(*decode_disparity(65535) == Approx((65535.0 - 1.0) / 256.0));
}

TEST_CASE("encode_disparity inverts the decode") {
    CHECK(encode_disparity(std::nullopt) == 0);
    CHECK(encode_disparity(0.0) == 1);
    CHECK(encode_disparity(2.0) == 513);
    CHECK_THROWS_AS(encode_disparity(-1.0), std::invalid_argument);
    // Above the representable range the code clamps to the ceiling.
    CHECK(encode_disparity(300.0) == 65535);
}

TEST_CASE("codec round-trips every valid 16-bit code") {
    for (std::uint32_t p = 1; p <= 65535; ++p) {
        const Disparity d = decode_disparity(static_cast<std::uint16_t>(p));
        REQUIRE(d.has_value());
        REQUIRE(encode_disparity(d) == p);
    }
}

TEST_CASE("disparity/depth geometry") {
    const CameraRig rig(0.22, 1000.0);
    CHECK(*disparity_to_depth(110.0, rig) == Approx(2.0));
    CHECK_FALSE(disparity_to_depth(0.0, rig).has_value());
    CHECK_FALSE(disparity_to_depth(std::nullopt, rig).has_value());
    CHECK(*disparity_to_depth(rig.baseline_m * rig.focal_px, rig) == Approx(1.0));

    CHECK(*depth_to_disparity(2.0, rig) == Approx(110.0));
    CHECK_FALSE(depth_to_disparity(std::nullopt, rig).has_value());
    CHECK(*depth_to_disparity(rig.baseline_m * rig.focal_px, rig) == Approx(1.0));

    CHECK_THROWS_AS(disparity_to_depth(-3.0, rig), std::invalid_argument);
    CHECK_THROWS_AS(depth_to_disparity(-3.0, rig), std::invalid_argument);
    CHECK_THROWS_AS(CameraRig(0.0, 100.0), std::invalid_argument);
    CHECK_THROWS_AS(CameraRig(0.22, -1.0), std::invalid_argument);
}

TEST_CASE("geometry inversion holds to 1e-9 and depth decreases in disparity") {
    const CameraRig rig(0.22, 2262.52);
    double prev_depth = std::numeric_limits<double>::infinity();
    for (double d = 0.5; d < 250.0; d += 0.73) {
        const Depth z = disparity_to_depth(d, rig);
        REQUIRE(z.has_value());
        CHECK(*depth_to_disparity(z, rig) == Approx(d).epsilon(1e-9));
        CHECK(*z < prev_depth);
        prev_depth = *z;
    }
}

TEST_CASE("raster_to_depth_map marks singular and invalid pixels") {
    const CameraRig rig(0.22, 1000.0);

    DisparityRaster zeros(3, 2);
    const DepthMap all_invalid = raster_to_depth_map(zeros, rig);
    for (int y = 0; y < 2; ++y)
        for (int x = 0; x < 3; ++x) CHECK_FALSE(all_invalid.valid_at(x, y));

    DisparityRaster uniform(4, 4);
    for (auto& c : uniform.codes) c = 513;  // disparity 2.0
    const DepthMap depths = raster_to_depth_map(uniform, rig);
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x) {
            REQUIRE(depths.valid_at(x, y));
            CHECK(depths.depth_at(x, y) == Approx(110.0));
        }

    DisparityRaster zero_disparity(1, 1);
    zero_disparity.at(0, 0) = 1;  // decodes to disparity 0: infinite depth
    CHECK_FALSE(raster_to_depth_map(zero_disparity, rig).valid_at(0, 0));
}

TEST_CASE("quantize_code rounds, clamps, and routes negatives to invalid") {
    CHECK(quantize_code(0.0) == 1);  // zero output clamps to the valid minimum
    CHECK(quantize_code(0.4) == 1);
    CHECK(quantize_code(-0.001) == 0);
    CHECK(quantize_code(-500.0) == 0);
    CHECK(quantize_code(std::numeric_limits<double>::quiet_NaN()) == 0);
    CHECK(quantize_code(1.0) == 1);
    CHECK(quantize_code(1.5) == 2);  // half rounds away from zero
    CHECK(quantize_code(2.5) == 3);
    CHECK(quantize_code(512.9) == 513);
    CHECK(quantize_code(65535.0) == 65535);
    CHECK(quantize_code(70000.0) == 65535);
    for (std::uint32_t p = 1; p <= 65535; p += 257)
        CHECK(quantize_code(static_cast<double>(p)) == p);
}

TEST_CASE("raster and image construction validates dimensions") {
    CHECK_THROWS_AS(DisparityRaster(0, 4), std::invalid_argument);
    CHECK_THROWS_AS(DisparityRaster(4, -1), std::invalid_argument);
    CHECK_THROWS_AS(RgbImage(-2, 4), std::invalid_argument);
    const DisparityRaster r(5, 3);
    CHECK(r.codes.size() == 15);
    CHECK(r.pixel_count() == 15);
}

TEST_CASE("resize_nearest preserves codes and block structure") {
    DisparityRaster r(2, 2);
    r.at(0, 0) = 10;
    r.at(1, 0) = 20;
    r.at(0, 1) = 30;
    r.at(1, 1) = 0;

    const DisparityRaster same = resize_nearest(r, 2, 2);
    CHECK(same.codes == r.codes);

    const DisparityRaster up = resize_nearest(r, 4, 4);
    CHECK(up.at(0, 0) == 10);
    CHECK(up.at(1, 0) == 10);
    CHECK(up.at(2, 0) == 20);
    CHECK(up.at(3, 3) == 0);
    // No invented codes: every output value exists in the source.
    for (const auto c : up.codes)
        CHECK((c == 10 || c == 20 || c == 30 || c == 0));

    const DisparityRaster down = resize_nearest(up, 2, 2);
    CHECK(down.codes == r.codes);
    CHECK_THROWS_AS(resize_nearest(r, 0, 2), std::invalid_argument);
}

TEST_CASE("resize_bilinear is exact on constant images and stays in range") {
    RgbImage img(3, 3);
    for (int y = 0; y < 3; ++y)
        for (int x = 0; x < 3; ++x)
            for (int c = 0; c < 3; ++c) img.at(x, y, c) = 77;
    const RgbImage up = resize_bilinear(img, 7, 5);
    for (int y = 0; y < 5; ++y)
        for (int x = 0; x < 7; ++x)
            for (int c = 0; c < 3; ++c) CHECK(static_cast<int>(up.at(x, y, c)) == 77);

    RgbImage grad(2, 1);
    grad.at(0, 0, 0) = 0;
    grad.at(1, 0, 0) = 200;
    const RgbImage wide = resize_bilinear(grad, 6, 1);
    for (int x = 1; x < 6; ++x) CHECK(wide.at(x, 0, 0) >= wide.at(x - 1, 0, 0));
}
