#pragma once

#include <fstream>
#include <string>

#include <json.hpp>

#include "multipass/critical.hpp"
#include "multipass/interaction.hpp"
#include "multipass/mountainpass.hpp"
#include "multipass/multipole.hpp"
#include "multipass/so3.hpp"
#include "multipass/toyquantum.hpp"

namespace multipass::io {

using nlohmann::json;

inline json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw parse_error("cannot open file: " + path);
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw parse_error(path + ": " + e.what());
    }
}

// ---------------------------------------------------------------------------
// molecules
// ---------------------------------------------------------------------------

inline ChargeDistribution molecule_from_json(const json& j, const std::string& where = "molecule") {
    ChargeDistribution d;
    try {
        d.label = j.value("label", "");
        d.declared_charge = j.value("declared_charge", 0.0);
        if (!j.contains("points") || !j["points"].is_array())
            throw parse_error(where + ": missing or non-array field 'points'");
        for (const auto& p : j["points"]) {
            if (!p.contains("q") || !p.contains("x") || !p["x"].is_array() || p["x"].size() != 3)
                throw parse_error(where + ": each point needs 'q' and a 3-vector 'x'");
            d.points.push_back(
                {p["q"].get<double>(), Vec3(p["x"][0].get<double>(), p["x"][1].get<double>(),
                                            p["x"][2].get<double>())});
        }
    } catch (const json::exception& e) {
        throw parse_error(where + ": " + e.what());
    }
    d.validate();
    return d;
}

inline ChargeDistribution load_molecule(const std::string& path) {
    return molecule_from_json(load_json_file(path), path);
}

inline json molecule_to_json(const ChargeDistribution& d) {
    json pts = json::array();
    for (const auto& p : d.points)
        pts.push_back({{"q", p.q}, {"x", {p.x.x(), p.x.y(), p.x.z()}}});
    return {{"label", d.label}, {"declared_charge", d.declared_charge}, {"points", pts}};
}

// ---------------------------------------------------------------------------
// multipoles and tables
// ---------------------------------------------------------------------------

inline json multipoles_to_json(const MultipoleSet& m) {
    json q = json::array();
    for (int i = 0; i < 3; ++i)
        q.push_back({m.quadrupole(i, 0), m.quadrupole(i, 1), m.quadrupole(i, 2)});
    json o = json::array();
    for (int i = 0; i < 3; ++i) {
        json oi = json::array();
        for (int jj = 0; jj < 3; ++jj)
            oi.push_back({m.octopole(i, jj, 0), m.octopole(i, jj, 1), m.octopole(i, jj, 2)});
        o.push_back(oi);
    }
    json h = json::array();
    for (int i = 0; i < 3; ++i) {
        json hi = json::array();
        for (int jj = 0; jj < 3; ++jj) {
            json hij = json::array();
            for (int k = 0; k < 3; ++k)
                hij.push_back({m.hexadecapole(i, jj, k, 0), m.hexadecapole(i, jj, k, 1),
                               m.hexadecapole(i, jj, k, 2)});
            hi.push_back(hij);
        }
        h.push_back(hi);
    }
    return {{"total_charge", m.total_charge},
            {"dipole", {m.dipole.x(), m.dipole.y(), m.dipole.z()}},
            {"quadrupole", q},
            {"octopole", o},
            {"hexadecapole", h}};
}

inline MultipoleSet multipoles_from_json(const json& j) {
    MultipoleSet m;
    try {
        m.total_charge = j.value("total_charge", 0.0);
        if (j.contains("dipole"))
            for (int i = 0; i < 3; ++i)
                m.dipole[i] = j["dipole"][i].get<double>();
        if (j.contains("quadrupole"))
            for (int i = 0; i < 3; ++i)
                for (int k = 0; k < 3; ++k)
                    m.quadrupole(i, k) = j["quadrupole"][i][k].get<double>();
        if (j.contains("octopole"))
            for (int i = 0; i < 3; ++i)
                for (int k = 0; k < 3; ++k)
                    for (int l = 0; l < 3; ++l)
                        m.octopole(i, k, l) = j["octopole"][i][k][l].get<double>();
        if (j.contains("hexadecapole"))
            for (int i = 0; i < 3; ++i)
                for (int k = 0; k < 3; ++k)
                    for (int l = 0; l < 3; ++l)
                        for (int r = 0; r < 3; ++r)
                            m.hexadecapole(i, k, l, r) = j["hexadecapole"][i][k][l][r].get<double>();
    } catch (const json::exception& e) {
        throw parse_error(std::string("multipoles: ") + e.what());
    }
    return m;
}

inline json interaction_table_to_json(const InteractionTable& t) {
    json entries = json::array();
    for (const auto& [n, m, v] : t.entries)
        entries.push_back({{"n", n}, {"m", m}, {"value", v}});
    return entries;
}

// ---------------------------------------------------------------------------
// rotations and configurations
// ---------------------------------------------------------------------------

inline json rotation_to_json(const Rotation& r) {
    return {r.w(), r.x(), r.y(), r.z()};
}

inline Rotation rotation_from_json(const json& j, const std::string& where = "rotation") {
    if (!j.is_array() || j.size() != 4)
        throw parse_error(where + ": expected a [w,x,y,z] quaternion array");
    return Rotation(j[0].get<double>(), j[1].get<double>(), j[2].get<double>(),
                    j[3].get<double>());
}

/// Accepts either "w:x:y:z" read as a quaternion when 4 fields, or the
/// axis-angle sugar "ax:ay:az:theta" when prefixed with "aa:".
inline Rotation rotation_from_string(const std::string& s) {
    std::vector<double> vals;
    std::string rest = s;
    bool axis_angle = false;
    if (rest.rfind("aa:", 0) == 0) {
        axis_angle = true;
        rest = rest.substr(3);
    }
    std::size_t pos = 0;
    while (!rest.empty()) {
        std::size_t next = rest.find(':', pos);
        std::string tok = rest.substr(pos, next - pos);
        try {
            vals.push_back(std::stod(tok));
        } catch (...) {
            throw parse_error("rotation: cannot parse component '" + tok + "'");
        }
        if (next == std::string::npos)
            break;
        pos = next + 1;
    }
    if (vals.size() != 4)
        throw parse_error("rotation: expected 4 ':'-separated numbers");
    if (axis_angle)
        return Rotation::axis_angle(Vec3(vals[0], vals[1], vals[2]), vals[3]);
    return Rotation(vals[0], vals[1], vals[2], vals[3]);
}

inline json config_to_json(const Config& c) {
    return {{"L", c.L}, {"U", rotation_to_json(c.U)}, {"V", rotation_to_json(c.V)}};
}

inline Config config_from_json(const json& j, const std::string& where = "config") {
    try {
        Config c;
        c.L = j.at("L").get<double>();
        c.U = rotation_from_json(j.at("U"), where + ".U");
        c.V = rotation_from_json(j.at("V"), where + ".V");
        return c;
    } catch (const json::exception& e) {
        throw parse_error(where + ": " + e.what());
    }
}

// ---------------------------------------------------------------------------
// toy quantum objects
// ---------------------------------------------------------------------------

inline MatC complex_matrix_from_json(const json& j, const std::string& where) {
    if (!j.is_array() || j.empty())
        throw parse_error(where + ": expected a non-empty array of rows");
    int n = int(j.size());
    MatC M(n, int(j[0].size()));
    for (int r = 0; r < n; ++r) {
        if (int(j[r].size()) != M.cols())
            throw parse_error(where + ": ragged rows");
        for (int c = 0; c < M.cols(); ++c) {
            const auto& e = j[r][c];
            if (e.is_number()) {
                M(r, c) = Cplx(e.get<double>(), 0.0);
            } else if (e.is_array() && e.size() == 2) {
                M(r, c) = Cplx(e[0].get<double>(), e[1].get<double>());
            } else {
                throw parse_error(where + ": entries must be numbers or [re,im] pairs");
            }
        }
    }
    return M;
}

inline json complex_matrix_to_json(const MatC& M) {
    json rows = json::array();
    for (int r = 0; r < M.rows(); ++r) {
        json row = json::array();
        for (int c = 0; c < M.cols(); ++c)
            row.push_back({M(r, c).real(), M(r, c).imag()});
        rows.push_back(row);
    }
    return rows;
}

inline ToyMolecule toymolecule_from_json(const json& j, const std::string& where = "toy molecule") {
    try {
        return ToyMolecule::from_operators(complex_matrix_from_json(j.at("H"), where + ".H"),
                                           complex_matrix_from_json(j.at("Dx"), where + ".Dx"),
                                           complex_matrix_from_json(j.at("Dy"), where + ".Dy"),
                                           complex_matrix_from_json(j.at("Dz"), where + ".Dz"),
                                           j.value("label", ""));
    } catch (const json::exception& e) {
        throw parse_error(where + ": " + e.what());
    }
}

inline ToyMolecule load_toymolecule(const std::string& path) {
    return toymolecule_from_json(load_json_file(path), path);
}

inline HermitianFamily family_from_json(const json& j, const std::string& where = "family") {
    try {
        if (!j.contains("nodes") || !j["nodes"].is_array() || j["nodes"].size() < 2)
            throw parse_error(where + ": needs an array 'nodes' of at least two matrices");
        std::vector<MatC> nodes;
        for (std::size_t k = 0; k < j["nodes"].size(); ++k)
            nodes.push_back(complex_matrix_from_json(j["nodes"][k],
                                                     where + ".nodes[" + std::to_string(k) + "]"));
        return HermitianFamily::from_samples(std::move(nodes));
    } catch (const json::exception& e) {
        throw parse_error(where + ": " + e.what());
    }
}

// ---------------------------------------------------------------------------
// model energy
// ---------------------------------------------------------------------------

inline ModelEnergy model_from_json(const json& j, const std::string& where = "model") {
    try {
        ModelEnergy me;
        me.E1 = j.value("E1", 0.0);
        me.E2 = j.value("E2", 0.0);
        me.kappa = j.value("kappa", 0.0);
        me.order = j.value("order", 5);
        me.L_min = j.value("L_min", 1.0);
        auto molecule = [&](const char* key) {
            const json& mj = j.at(key);
            if (mj.is_string())
                return compute_multipoles(load_molecule(mj.get<std::string>()));
            if (mj.contains("points"))
                return compute_multipoles(molecule_from_json(mj, where + "." + key));
            return multipoles_from_json(mj);
        };
        me.m1 = molecule("molecule1");
        me.m2 = molecule("molecule2");
        if (j.contains("cvdw")) {
            const json& cj = j["cvdw"];
            std::string kind = cj.value("kind", "constant");
            if (kind == "constant") {
                me.cvdw = CvdwModel::constant(cj.value("c0", 1.0));
            } else if (kind == "polynomial") {
                Vec3 d1 = me.m1.dipole.norm() > 0 ? me.m1.dipole : Vec3::UnitX();
                Vec3 d2 = me.m2.dipole.norm() > 0 ? me.m2.dipole : Vec3::UnitX();
                me.cvdw = CvdwModel::polynomial(cj.value("c0", 1.0), cj.value("c1", 0.0),
                                                cj.value("c2", 0.0), cj.value("c3", 0.0), d1, d2);
            } else {
                throw parse_error(where + ".cvdw: unknown kind '" + kind + "'");
            }
        }
        me.validate();
        return me;
    } catch (const json::exception& e) {
        throw parse_error(where + ": " + e.what());
    }
}

} // namespace multipass::io
