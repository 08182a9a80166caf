// Copyright Contributors to the CogSplat Project
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "cogsplat/scene_gen.hpp"
#include "cogsplat/tokens.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

using namespace cogsplat;

namespace {

std::string temp_path(const char* name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

std::vector<char> read_all(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("gen_scene is deterministic and respects bounds") {
    GeneratedScene a = gen_scene(0, 1);
    GeneratedScene b = gen_scene(0, 1);
    CHECK(a.spec.objects[0].center == b.spec.objects[0].center);
    CHECK(a.scene.to_matrix() == b.scene.to_matrix());
    CHECK(a.scene.size() == 256);
    CHECK(a.scene.valid());
    for (const SceneObject& o : a.spec.objects) {
        CHECK((o.center.array().abs() + o.half_extent.array() <= 1.0 + 1e-12).all());
    }
}

TEST_CASE("derived left-of implies ordered centers") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        GeneratedScene g = gen_scene(seed, 4);
        for (int a = 0; a < g.spec.count(); ++a)
            for (int b = 0; b < g.spec.count(); ++b)
                if (g.spec.relations(a, b) == static_cast<int>(Relation::left_of))
                    CHECK(g.spec.objects[a].center.x() < g.spec.objects[b].center.x());
    }
}

TEST_CASE("relations match an independent geometric classifier") {
    // Brute-force reclassification straight from the emitted centers/extents,
    // written against the documented rules rather than derive_relations.
    SceneGeometry geom;
    GeneratedScene g = gen_scene(7, 3);
    const auto& obj = g.spec.objects;
    for (int a = 0; a < 3; ++a) {
        for (int b = 0; b < 3; ++b) {
            if (a == b) continue;
            int expected = static_cast<int>(Relation::none);
            const double right_edge_a = obj[a].center.x() + obj[a].half_extent.x();
            const double left_edge_b = obj[b].center.x() - obj[b].half_extent.x();
            const double top_edge_b = obj[b].center.z() + obj[b].half_extent.z();
            const double bottom_edge_a = obj[a].center.z() - obj[a].half_extent.z();
            if (left_edge_b - right_edge_a > geom.contact_margin)
                expected = static_cast<int>(Relation::left_of);
            else if (bottom_edge_a - top_edge_b > geom.contact_margin)
                expected = static_cast<int>(Relation::above);
            else if ((obj[a].center - obj[b].center).norm() < geom.near_margin)
                expected = static_cast<int>(Relation::near_to);
            CHECK(g.spec.relations(a, b) == expected);
        }
    }
}

TEST_CASE("gen_scene fails cleanly when objects cannot fit") {
    SceneGenConfig cfg;
    cfg.geometry.min_half_extent = 0.9;
    cfg.geometry.max_half_extent = 0.95;
    CHECK_THROWS_AS(gen_scene(0, 8, cfg), GenerationError);
}

TEST_CASE("token streams are disentangled by construction") {
    ProjectionBank bank = ProjectionBank::make(0, 32);
    GeneratedScene g = gen_scene(3, 3);
    TokenBundle base = synth_tokens(g.spec, bank);

    SceneSpec recolored = g.spec;
    recolored.objects[1].color = Vector3d(0.9, 0.1, 0.2);
    TokenBundle rc = synth_tokens(recolored, bank);
    CHECK(rc.t_g == base.t_g);
    CHECK(rc.t_l == base.t_l);  // color does not enter logical descriptors
    CHECK(rc.t_s != base.t_s);

    SceneSpec moved = g.spec;
    moved.objects[1].center.x() += 0.05;
    moved.relations = derive_relations(moved.objects, SceneGeometry{});
    TokenBundle mv = synth_tokens(moved, bank);
    CHECK(mv.t_s == base.t_s);
    CHECK(mv.t_g != base.t_g);
}

TEST_CASE("logical stream has one token per non-trivial relation plus a global token") {
    ProjectionBank bank = ProjectionBank::make(0, 16);
    GeneratedScene g = gen_scene(11, 4);
    int nontrivial = 0;
    for (int a = 0; a < 4; ++a)
        for (int b = 0; b < 4; ++b)
            if (a != b && g.spec.relations(a, b) != 0) ++nontrivial;
    TokenBundle bundle = synth_tokens(g.spec, bank);
    CHECK(bundle.t_l.rows() == nontrivial + 1);
    CHECK(bundle.labels.size() == 4);
    for (const GroundingLabel& l : bundle.labels) CHECK(l.class_id < ProjectionBank::kClassVocab);
}

TEST_CASE("bundle round-trips bitwise through CGT1") {
    ProjectionBank bank = ProjectionBank::make(1, 24);
    GeneratedScene g = gen_scene(5, 2);
    TokenBundle bundle = synth_tokens(g.spec, bank);

    const std::string path = temp_path("bundle_roundtrip.cgt");
    save_bundle(bundle, path);
    TokenBundle loaded = load_bundle(path);
    CHECK(loaded.t_s == bundle.t_s);
    CHECK(loaded.t_g == bundle.t_g);
    CHECK(loaded.t_l == bundle.t_l);
    REQUIRE(loaded.labels.size() == bundle.labels.size());
    for (std::size_t i = 0; i < bundle.labels.size(); ++i) {
        CHECK(loaded.labels[i].entity == bundle.labels[i].entity);
        CHECK(loaded.labels[i].class_id == bundle.labels[i].class_id);
    }

    // Saving twice produces identical bytes.
    const std::string path2 = temp_path("bundle_roundtrip2.cgt");
    save_bundle(loaded, path2);
    CHECK(read_all(path) == read_all(path2));
    std::remove(path.c_str());
    std::remove(path2.c_str());
}

TEST_CASE("corrupted magic reports byte offset zero") {
    ProjectionBank bank = ProjectionBank::make(2, 8);
    TokenBundle bundle = synth_tokens(gen_scene(1, 1).spec, bank);
    const std::string path = temp_path("bundle_badmagic.cgt");
    save_bundle(bundle, path);
    {
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        f.put('X');
    }
    try {
        load_bundle(path);
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        CHECK(e.offset() == 0);
    }
    std::remove(path.c_str());
}

TEST_CASE("bundle with empty semantic stream is rejected") {
    const std::string path = temp_path("bundle_empty.cgt");
    {
        std::ofstream out(path, std::ios::binary);
        out.write("CGT1", 4);
        const std::uint32_t header[5] = {8, 0, 1, 1, 0};  // n_s = 0
        out.write(reinterpret_cast<const char*>(header), sizeof header);
    }
    CHECK_THROWS_WITH_AS(load_bundle(path), doctest::Contains("empty semantic stream"), FormatError);
    std::remove(path.c_str());
}

TEST_CASE("truncated bundle names the failing offset") {
    ProjectionBank bank = ProjectionBank::make(3, 8);
    TokenBundle bundle = synth_tokens(gen_scene(2, 1).spec, bank);
    const std::string path = temp_path("bundle_trunc.cgt");
    save_bundle(bundle, path);
    std::filesystem::resize_file(path, 30);
    CHECK_THROWS_AS(load_bundle(path), FormatError);
    std::remove(path.c_str());
}

TEST_CASE("scene spec JSON round-trips and validates relations") {
    GeneratedScene g = gen_scene(9, 3);
    const std::string path = temp_path("spec_roundtrip.json");
    save_scene_spec(g.spec, path);
    SceneSpec loaded = load_scene_spec(path, SceneGeometry{});
    REQUIRE(loaded.count() == g.spec.count());
    for (int i = 0; i < loaded.count(); ++i) {
        CHECK(loaded.objects[i].class_id == g.spec.objects[i].class_id);
        CHECK(loaded.objects[i].center == g.spec.objects[i].center);
        CHECK(loaded.objects[i].half_extent == g.spec.objects[i].half_extent);
        CHECK(loaded.objects[i].color == g.spec.objects[i].color);
    }
    CHECK(loaded.relations == g.spec.relations);
    std::remove(path.c_str());
}

TEST_CASE("synthetic bundles are byte-identical across repeated generation") {
    ProjectionBank bank = ProjectionBank::make(0, 64);
    GeneratedScene g1 = gen_scene(3, 3);
    GeneratedScene g2 = gen_scene(3, 3);
    const std::string p1 = temp_path("golden_a.cgt"), p2 = temp_path("golden_b.cgt");
    save_bundle(synth_tokens(g1.spec, bank), p1);
    save_bundle(synth_tokens(g2.spec, bank), p2);
    CHECK(read_all(p1) == read_all(p2));
    std::remove(p1.c_str());
    std::remove(p2.c_str());
}

TEST_CASE("scene container and PLY round-trip at f32 precision") {
    GeneratedScene g = gen_scene(4, 2);
    const std::string cgs = temp_path("scene.cgs");
    save_scene(g.scene, cgs);
    GaussianScene loaded = load_scene(cgs);
    CHECK(loaded.to_matrix() == g.scene.to_matrix());
    std::remove(cgs.c_str());

    for (bool binary : {true, false}) {
        const std::string ply = temp_path(binary ? "scene_b.ply" : "scene_a.ply");
        export_ply(g.scene, ply, binary);
        GaussianScene back = import_ply(ply);
        REQUIRE(back.size() == g.scene.size());
        CHECK(back.to_matrix() == g.scene.to_matrix());

        // Header carries the vertex count.
        std::ifstream in(ply);
        std::string line;
        bool found = false;
        while (std::getline(in, line) && line != "end_header")
            found = found || line == ("element vertex " + std::to_string(g.scene.size()));
        CHECK(found);
        std::remove(ply.c_str());
    }
}

TEST_CASE("malformed PLY header is rejected") {
    const std::string path = temp_path("bad.ply");
    {
        std::ofstream out(path);
        out << "ply\nformat binary_big_endian 1.0\n";
    }
    CHECK_THROWS_AS(import_ply(path), FormatError);
    std::remove(path.c_str());
}
