#include "overlay.hpp"

#include <doctest.h>

#include <filesystem>

using namespace mplreg;

namespace {

Volume box(int n, int shift)
{
    const GridMeta g = make_grid({n, n, n});
    Volume v(g);
    for (int k = 0; k < n; ++k)
        for (int j = n / 4; j < 3 * n / 4; ++j)
            for (int i = n / 4 + shift; i < 3 * n / 4 + shift; ++i)
                v.at(i, j, k) = 0.8;
    return v;
}

} // namespace

TEST_CASE("identical images put edges on the fixed edges")
{
    const Volume v = box(32, 0);
    OverlaySettings s;
    s.window = 2.0;
    s.level = 0.5;
    const Gray8 img = render_overlay(v, v, s);
    const auto edges = edge_mask(extract_slice(v, 2, 16), 0.9);
    int count = 0;
    for (std::size_t n = 0; n < edges.size(); ++n) {
        CHECK((img.pixels[n] == 255) == bool(edges[n]));
        count += edges[n];
    }
    CHECK(count > 0);
}

TEST_CASE("a translated pair shows shifted edges")
{
    const int shift = 3;
    const Volume f = box(32, 0), m = box(32, shift);
    const auto ef = edge_mask(extract_slice(f, 2, 16), 0.9);
    const auto em = edge_mask(extract_slice(m, 2, 16), 0.9);
    int best = -99, best_score = -1;
    for (int dx = -6; dx <= 6; ++dx) {
        int score = 0;
        for (int y = 0; y < 32; ++y)
            for (int x = 0; x < 32; ++x) {
                const int xs = x + dx;
                if (xs >= 0 && xs < 32)
                    score += ef[std::size_t(y * 32 + x)] && em[std::size_t(y * 32 + xs)];
            }
        if (score > best_score) {
            best_score = score;
            best = dx;
        }
    }
    CHECK(best == shift);
}

TEST_CASE("overlay shape and slice range")
{
    const Volume v(make_grid({128, 128, 128}), 0.0);
    OverlaySettings s;
    s.index = 64;
    const Gray8 img = render_overlay(v, v, s);
    CHECK(img.width == 128);
    CHECK(img.height == 128);
    s.index = 128;
    CHECK_THROWS_AS(render_overlay(v, v, s), Error);
    s.index = 0;
    s.axis = 0;
    const Volume r(make_grid({10, 20, 30}), 0.0);
    const Gray8 side = render_overlay(r, r, s);
    CHECK(side.width == 20);
    CHECK(side.height == 30);
}

TEST_CASE("window and level map intensities")
{
    const GridMeta g = make_grid({4, 4, 1});
    Volume f(g);
    f[0] = 0.0;
    f[1] = 0.5;
    f[2] = 1.0;
    const Volume flat(g, 0.0);
    OverlaySettings s;
    s.index = 0;
    s.window = 1.0;
    s.level = 0.5;
    const Gray8 img = render_overlay(f, flat, s);
    CHECK(img.pixels[0] == 0);
    CHECK(int(img.pixels[1]) == doctest::Approx(128).epsilon(0.01));
    CHECK(img.pixels[2] == 255);
}

TEST_CASE("PNG round trip")
{
    Gray8 img;
    img.width = 7;
    img.height = 5;
    for (int i = 0; i < 35; ++i)
        img.pixels.push_back(std::uint8_t(i * 7));
    const auto p = std::filesystem::temp_directory_path() / "mplreg_tests" / "rt.png";
    std::filesystem::create_directories(p.parent_path());
    write_png(img, p);
    const Gray8 back = read_png(p);
    CHECK(back.width == 7);
    CHECK(back.height == 5);
    CHECK(back.pixels == img.pixels);
}
