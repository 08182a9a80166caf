// Copyright Contributors to the CogSplat Project
// SPDX-License-Identifier: Apache-2.0

#include "cogsplat/tokens.hpp"

#include "cogsplat/binary_io.hpp"
#include "cogsplat/rng.hpp"

#include <nlohmann/json.hpp>

#include <fstream>

namespace cogsplat {

using nlohmann::json;

Eigen::MatrixXi derive_relations(const std::vector<SceneObject>& objects, const SceneGeometry& geom) {
    const int n = static_cast<int>(objects.size());
    Eigen::MatrixXi rel = Eigen::MatrixXi::Constant(n, n, static_cast<int>(Relation::none));
    for (int a = 0; a < n; ++a) {
        for (int b = 0; b < n; ++b) {
            if (a == b) continue;
            const SceneObject& oa = objects[static_cast<std::size_t>(a)];
            const SceneObject& ob = objects[static_cast<std::size_t>(b)];
            const double gap_x = (ob.center.x() - ob.half_extent.x()) - (oa.center.x() + oa.half_extent.x());
            const double gap_z = (oa.center.z() - oa.half_extent.z()) - (ob.center.z() + ob.half_extent.z());
            if (gap_x > geom.contact_margin)
                rel(a, b) = static_cast<int>(Relation::left_of);
            else if (gap_z > geom.contact_margin)
                rel(a, b) = static_cast<int>(Relation::above);
            else if ((oa.center - ob.center).norm() < geom.near_margin)
                rel(a, b) = static_cast<int>(Relation::near_to);
        }
    }
    return rel;
}

void TokenBundle::validate(int vocab_size) const {
    if (t_s.rows() == 0) throw FormatError("empty semantic stream", 0);
    if (t_l.rows() < 1) throw FormatError("logical stream must hold at least one token", 0);
    if (t_s.cols() != t_g.cols() || t_s.cols() != t_l.cols())
        throw DimensionError("TokenBundle: streams disagree on token dimension");
    require_finite(t_s, "T_S");
    require_finite(t_g, "T_G");
    require_finite(t_l, "T_L");
    for (const GroundingLabel& l : labels)
        if (l.class_id >= static_cast<std::uint32_t>(vocab_size))
            throw ConfigError("grounding label class outside vocabulary");
}

ProjectionBank ProjectionBank::make(std::uint64_t seed, Eigen::Index token_dim) {
    ProjectionBank bank;
    auto draw = [&](const char* name, Eigen::Index rows) {
        Matrix m = RngStream(seed, name).normal_matrix(rows, token_dim) / std::sqrt(static_cast<double>(rows));
        return round_f32(m);
    };
    bank.p_sem = draw("bank.sem", kSemDesc);
    bank.p_geo = draw("bank.geo", kGeoDesc);
    bank.p_log = draw("bank.log", kLogDesc);
    return bank;
}

TokenBundle synth_tokens(const SceneSpec& spec, const ProjectionBank& bank) {
    const int n = spec.count();
    if (n == 0) throw GenerationError("synth_tokens: empty scene");

    Matrix sem_desc = Matrix::Zero(n, ProjectionBank::kSemDesc);
    Matrix geo_desc = Matrix::Zero(n, ProjectionBank::kGeoDesc);
    for (int i = 0; i < n; ++i) {
        const SceneObject& o = spec.objects[static_cast<std::size_t>(i)];
        if (o.class_id < 0 || o.class_id >= ProjectionBank::kClassVocab)
            throw ConfigError("synth_tokens: class id outside vocabulary");
        sem_desc(i, o.class_id) = 1.0;
        sem_desc.block<1, 3>(i, ProjectionBank::kClassVocab) = o.color.transpose();
        geo_desc.block<1, 3>(i, 0) = o.center.transpose();
        geo_desc.block<1, 3>(i, 3) = o.half_extent.transpose();
    }

    std::vector<Eigen::RowVectorXd> log_rows;
    for (int a = 0; a < n; ++a) {
        for (int b = 0; b < n; ++b) {
            if (a == b || spec.relations(a, b) == static_cast<int>(Relation::none)) continue;
            Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(ProjectionBank::kLogDesc);
            row(spec.relations(a, b)) = 1.0;
            row(kRelationVocab + spec.objects[static_cast<std::size_t>(a)].class_id) = 1.0;
            row(kRelationVocab + ProjectionBank::kClassVocab + spec.objects[static_cast<std::size_t>(b)].class_id) =
                1.0;
            log_rows.push_back(row);
        }
    }
    // Trailing global token flagged in the last descriptor slot.
    Eigen::RowVectorXd global = Eigen::RowVectorXd::Zero(ProjectionBank::kLogDesc);
    global(ProjectionBank::kLogDesc - 1) = 1.0;
    log_rows.push_back(global);

    Matrix log_desc(static_cast<Eigen::Index>(log_rows.size()), ProjectionBank::kLogDesc);
    for (std::size_t i = 0; i < log_rows.size(); ++i) log_desc.row(static_cast<Eigen::Index>(i)) = log_rows[i];

    TokenBundle bundle;
    bundle.t_s = round_f32(sem_desc * bank.p_sem);
    bundle.t_g = round_f32(geo_desc * bank.p_geo);
    bundle.t_l = round_f32(log_desc * bank.p_log);
    for (int i = 0; i < n; ++i)
        bundle.labels.push_back(GroundingLabel{static_cast<std::uint32_t>(i),
                                               static_cast<std::uint32_t>(spec.objects[static_cast<std::size_t>(i)].class_id)});
    bundle.validate(ProjectionBank::kClassVocab);
    return bundle;
}

void save_bundle(const TokenBundle& bundle, const std::string& path) {
    io::Writer w(path);
    w.magic("CGT1");
    w.u32(static_cast<std::uint32_t>(bundle.dim()));
    w.u32(static_cast<std::uint32_t>(bundle.t_s.rows()));
    w.u32(static_cast<std::uint32_t>(bundle.t_g.rows()));
    w.u32(static_cast<std::uint32_t>(bundle.t_l.rows()));
    w.u32(static_cast<std::uint32_t>(bundle.labels.size()));
    w.matrix_f32(bundle.t_s);
    w.matrix_f32(bundle.t_g);
    w.matrix_f32(bundle.t_l);
    for (const GroundingLabel& l : bundle.labels) {
        w.u32(l.entity);
        w.u32(l.class_id);
    }
    w.close();
}

TokenBundle load_bundle(const std::string& path) {
    io::Reader r(path);
    r.expect_magic("CGT1");
    const std::uint32_t d = r.u32();
    const std::uint32_t n_s = r.u32();
    const std::uint32_t n_g = r.u32();
    const std::uint32_t m = r.u32();
    const std::uint32_t k = r.u32();
    if (n_s == 0) throw FormatError(path + ": empty semantic stream", 8);
    if (m == 0) throw FormatError(path + ": empty logical stream", 16);

    TokenBundle bundle;
    bundle.t_s = r.matrix_f32(n_s, d);
    bundle.t_g = r.matrix_f32(n_g, d);
    bundle.t_l = r.matrix_f32(m, d);
    for (std::uint32_t i = 0; i < k; ++i) {
        GroundingLabel l;
        l.entity = r.u32();
        l.class_id = r.u32();
        bundle.labels.push_back(l);
    }
    if (!r.at_eof()) throw FormatError(path + ": trailing bytes after payload", r.offset());
    return bundle;
}

void save_scene_spec(const SceneSpec& spec, const std::string& path) {
    json objects = json::array();
    for (const SceneObject& o : spec.objects) {
        objects.push_back({{"class", o.class_id},
                           {"center", {o.center.x(), o.center.y(), o.center.z()}},
                           {"half_extent", {o.half_extent.x(), o.half_extent.y(), o.half_extent.z()}},
                           {"color", {o.color.x(), o.color.y(), o.color.z()}}});
    }
    json relations = json::array();
    for (int a = 0; a < spec.count(); ++a)
        for (int b = 0; b < spec.count(); ++b)
            if (a != b && spec.relations(a, b) != static_cast<int>(Relation::none))
                relations.push_back({a, b, spec.relations(a, b)});

    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << json{{"objects", objects}, {"relations", relations}}.dump(2) << "\n";
}

SceneSpec load_scene_spec(const std::string& path, const SceneGeometry& geom) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open for reading: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw FormatError(path + ": " + e.what(), 0);
    }

    SceneSpec spec;
    for (const json& jo : j.at("objects")) {
        SceneObject o;
        o.class_id = jo.at("class").get<int>();
        for (int i = 0; i < 3; ++i) {
            o.center(i) = jo.at("center").at(i).get<double>();
            o.half_extent(i) = jo.at("half_extent").at(i).get<double>();
            o.color(i) = jo.at("color").at(i).get<double>();
        }
        spec.objects.push_back(o);
    }
    // Relations are derived, never trusted: recompute and require agreement.
    spec.relations = derive_relations(spec.objects, geom);
    for (const json& jr : j.at("relations")) {
        const int a = jr.at(0).get<int>(), b = jr.at(1).get<int>(), rel = jr.at(2).get<int>();
        if (a < 0 || b < 0 || a >= spec.count() || b >= spec.count())
            throw FormatError(path + ": relation index out of range", 0);
        if (spec.relations(a, b) != rel)
            throw FormatError(path + ": stored relation disagrees with geometry", 0);
    }
    return spec;
}

}  // namespace cogsplat
