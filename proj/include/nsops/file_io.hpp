#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "nsops/assembly.hpp"
#include "nsops/control.hpp"
#include "nsops/mesh.hpp"
#include "nsops/solvers.hpp"

namespace nsops {

inline constexpr int kBundleFormatVersion = 1;

/// Shortest decimal representation that round-trips the double exactly.
inline std::string fmt_double(double v) {
    char buf[40];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

namespace io_detail {

inline void write_lines_open(std::ofstream& out, const std::string& path) {
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
}

inline std::string read_data_line(std::istream& in, const std::string& path) {
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line[0] != '%') return line;
    }
    throw std::runtime_error("unexpected end of file: " + path);
}

} // namespace io_detail

inline void write_matrix_market(const SparseMatrix& A, const std::string& path) {
    std::ofstream out(path);
    io_detail::write_lines_open(out, path);
    out << "%%MatrixMarket matrix coordinate real general\n";
    out << A.nrows << " " << A.ncols << " " << A.nnz() << "\n";
    for (index_t i = 0; i < A.nrows; ++i)
        for (index_t k = A.row_ptr[i]; k < A.row_ptr[i + 1]; ++k)
            out << (i + 1) << " " << (A.col_idx[k] + 1) << " " << fmt_double(A.values[k]) << "\n";
}

inline SparseMatrix read_matrix_market(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open: " + path);
    std::string header;
    std::getline(in, header);
    if (header.rfind("%%MatrixMarket matrix coordinate real general", 0) != 0)
        throw std::runtime_error("malformed Matrix Market header in " + path);
    std::istringstream dims(io_detail::read_data_line(in, path));
    long long nr = 0, nc = 0, nnz = 0;
    if (!(dims >> nr >> nc >> nnz) || nr < 0 || nc < 0 || nnz < 0)
        throw std::runtime_error("malformed Matrix Market size line in " + path);
    CooBuilder coo(static_cast<index_t>(nr), static_cast<index_t>(nc));
    coo.reserve(static_cast<std::size_t>(nnz));
    for (long long e = 0; e < nnz; ++e) {
        std::istringstream row(io_detail::read_data_line(in, path));
        long long i = 0, j = 0;
        double v = 0.0;
        if (!(row >> i >> j >> v) || i < 1 || i > nr || j < 1 || j > nc)
            throw std::runtime_error("malformed Matrix Market entry in " + path);
        coo.add(static_cast<index_t>(i - 1), static_cast<index_t>(j - 1), v);
    }
    return coo.finalize();
}

inline void write_vector_market(const Vector& x, const std::string& path) {
    std::ofstream out(path);
    io_detail::write_lines_open(out, path);
    out << "%%MatrixMarket matrix array real general\n";
    out << x.size() << " 1\n";
    for (double v : x) out << fmt_double(v) << "\n";
}

inline Vector read_vector_market(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open: " + path);
    std::string header;
    std::getline(in, header);
    if (header.rfind("%%MatrixMarket matrix array real general", 0) != 0)
        throw std::runtime_error("malformed Matrix Market array header in " + path);
    std::istringstream dims(io_detail::read_data_line(in, path));
    long long n = 0, one = 0;
    if (!(dims >> n >> one) || n < 0 || one != 1)
        throw std::runtime_error("malformed array size line in " + path);
    Vector x(static_cast<std::size_t>(n));
    for (long long i = 0; i < n; ++i) {
        std::istringstream row(io_detail::read_data_line(in, path));
        if (!(row >> x[static_cast<std::size_t>(i)])) throw std::runtime_error("malformed array entry in " + path);
    }
    return x;
}

/// The convection tensor is stored in coordinate form with the composite
/// 1-based Kronecker column j*n + k + 1; a comment line declares n.
inline void write_conv_tensor(const ConvTensor& H, const std::string& path) {
    std::ofstream out(path);
    io_detail::write_lines_open(out, path);
    const std::int64_t n = H.n;
    out << "%%MatrixMarket matrix coordinate real general\n";
    out << "% convection tensor, row i and column j*n+k over velocity dimension n=" << n << "\n";
    out << n << " " << n * n << " " << H.entries.size() << "\n";
    for (const auto& e : H.entries)
        out << (e.i + 1) << " " << (static_cast<std::int64_t>(e.j) * n + e.k + 1) << " " << fmt_double(e.value)
            << "\n";
}

inline ConvTensor read_conv_tensor(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open: " + path);
    std::string header;
    std::getline(in, header);
    if (header.rfind("%%MatrixMarket matrix coordinate real general", 0) != 0)
        throw std::runtime_error("malformed tensor header in " + path);
    std::istringstream dims(io_detail::read_data_line(in, path));
    std::int64_t n = 0, ncols = 0, nnz = 0;
    if (!(dims >> n >> ncols >> nnz) || n < 0 || ncols != n * n || nnz < 0)
        throw std::runtime_error("malformed tensor size line in " + path);
    ConvTensorBuilder builder(static_cast<index_t>(n));
    builder.reserve(static_cast<std::size_t>(nnz));
    for (std::int64_t e = 0; e < nnz; ++e) {
        std::istringstream row(io_detail::read_data_line(in, path));
        std::int64_t i = 0, col = 0;
        double v = 0.0;
        if (!(row >> i >> col >> v) || i < 1 || i > n || col < 1 || col > n * n)
            throw std::runtime_error("malformed tensor entry in " + path);
        builder.add(static_cast<index_t>(i - 1), static_cast<index_t>((col - 1) / n),
                    static_cast<index_t>((col - 1) % n), v);
    }
    return builder.finalize();
}

/// Describes a persisted operator bundle. The manifest is a JSON file named
/// PROBLEMNAME__mats__NV*XX*_Re1[_bccontrol_palpha1].json next to the
/// Matrix Market operator files it lists.
struct BundleManifest {
    std::string problem;
    index_t N = 0; // 0 when the mesh is not known (external bundles)
    index_t NV = 0;
    index_t m = 0; // pressure rows actually stored (pinned: full m - 1)
    bool pinned = false;
    std::string re_convention = "A and fv_diff stored unscaled; multiply by 1/Re";
    std::string dof_ordering = "interleaved (dof = 2*node + component)";
    int format_version = kBundleFormatVersion;
    bool has_control = false;
    bool has_robin = false;
    index_t Nu = 0, q = 0;
    std::map<std::string, std::string> files; // operator name -> file name
    std::string directory;                    // location (set on write/read)
    std::string manifest_name;
};

namespace io_detail {

inline nlohmann::json rect_to_json(const Rect& r) {
    return nlohmann::json{{"xmin", r.xmin}, {"xmax", r.xmax}, {"ymin", r.ymin}, {"ymax", r.ymax}};
}

inline Rect rect_from_json(const nlohmann::json& j) {
    return Rect{j.at("xmin"), j.at("xmax"), j.at("ymin"), j.at("ymax")};
}

} // namespace io_detail

/// Write the full operator bundle as Matrix Market files plus a JSON
/// manifest (written last, so a complete manifest implies complete data).
inline BundleManifest write_bundle(const FlowSystem& sys, const ControlOperators* ctrl, const std::string& dir,
                                   const std::string& problem = "drivencavity", index_t N = 0,
                                   const RobinControl* robin = nullptr) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    if (!fs::is_directory(dir)) throw std::runtime_error("write_bundle: not a directory: " + dir);

    BundleManifest man;
    man.problem = problem;
    man.N = N;
    man.NV = sys.nv();
    man.m = sys.m_rows();
    man.pinned = sys.pinned;
    man.has_control = ctrl != nullptr;
    man.has_robin = robin != nullptr;
    man.directory = dir;

    std::string stem = problem + "__mats__NV" + std::to_string(man.NV) + "_Re1";
    if (robin) stem += "_bccontrol_palpha1";
    man.manifest_name = stem + ".json";

    auto mat_file = [&](const std::string& name, const SparseMatrix& A) {
        const std::string fname = stem + "." + name + ".mtx";
        write_matrix_market(A, dir + "/" + fname);
        man.files[name] = fname;
    };
    auto vec_file = [&](const std::string& name, const Vector& x) {
        const std::string fname = stem + "." + name + ".mtx";
        write_vector_market(x, dir + "/" + fname);
        man.files[name] = fname;
    };

    mat_file("M", sys.M);
    mat_file("A", sys.A);
    mat_file("J", sys.J);
    mat_file("L1", sys.L1);
    mat_file("L2", sys.L2);
    {
        const std::string fname = stem + ".H.mtx";
        write_conv_tensor(sys.H, dir + "/" + fname);
        man.files["H"] = fname;
    }
    vec_file("fv", sys.fv);
    vec_file("fv_diff", sys.fv_diff);
    vec_file("fv_conv", sys.fv_conv);
    vec_file("gv", sys.gv);
    vec_file("fp_div", sys.fp_div);

    nlohmann::json j;
    j["format_version"] = man.format_version;
    j["problem"] = man.problem;
    j["N"] = man.N;
    j["NV"] = man.NV;
    j["m"] = man.m;
    j["pinned"] = man.pinned;
    j["re_convention"] = man.re_convention;
    j["dof_ordering"] = man.dof_ordering;

    if (ctrl) {
        man.Nu = ctrl->cfg.Nu;
        man.q = ctrl->cfg.q;
        mat_file("B", ctrl->B);
        mat_file("Cv", ctrl->Cv);
        mat_file("Cp", ctrl->Cp);
        mat_file("My", ctrl->My);
        mat_file("Mu", ctrl->Mu);
        j["control"] = {{"Nu", man.Nu},
                        {"q", man.q},
                        {"input_varying_axis", ctrl->cfg.input_varying_axis},
                        {"output_varying_axis", ctrl->cfg.output_varying_axis},
                        {"omega_c", io_detail::rect_to_json(ctrl->cfg.omega_c)},
                        {"omega_o", io_detail::rect_to_json(ctrl->cfg.omega_o)},
                        {"omega_p", io_detail::rect_to_json(ctrl->cfg.omega_p)}};
    }
    if (robin) {
        mat_file("Abc", robin->Abc);
        mat_file("Bbc", robin->Bbc);
        j["robin"] = {{"alpha_stored", 1.0}, {"Nu_bc", robin->Bbc.ncols}};
    }
    j["files"] = man.files;

    std::ofstream out(dir + "/" + man.manifest_name);
    io_detail::write_lines_open(out, dir + "/" + man.manifest_name);
    out << j.dump(2) << "\n";
    return man;
}

struct LoadedBundle {
    FlowSystem sys;
    std::optional<ControlOperators> ctrl;
    std::optional<RobinControl> robin;
    BundleManifest manifest;
};

inline LoadedBundle read_bundle(const std::string& manifest_path) {
    std::ifstream in(manifest_path);
    if (!in) throw std::runtime_error("cannot open manifest: " + manifest_path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("malformed manifest " + manifest_path + ": " + e.what());
    }

    LoadedBundle b;
    BundleManifest& man = b.manifest;
    man.format_version = j.at("format_version");
    if (man.format_version != kBundleFormatVersion)
        throw std::runtime_error("unsupported bundle format version in " + manifest_path);
    man.problem = j.at("problem");
    man.N = j.at("N");
    man.NV = j.at("NV");
    man.m = j.at("m");
    man.pinned = j.at("pinned");
    man.re_convention = j.value("re_convention", man.re_convention);
    man.dof_ordering = j.value("dof_ordering", man.dof_ordering);
    man.files = j.at("files").get<std::map<std::string, std::string>>();
    const std::filesystem::path mpath(manifest_path);
    man.directory = mpath.parent_path().string();
    if (man.directory.empty()) man.directory = ".";
    man.manifest_name = mpath.filename().string();

    auto file_of = [&](const std::string& name) {
        auto it = man.files.find(name);
        if (it == man.files.end()) throw std::runtime_error("manifest missing operator: " + name);
        const std::string path = man.directory + "/" + it->second;
        if (!std::filesystem::exists(path)) throw std::runtime_error("missing bundle file: " + path);
        return path;
    };
    auto check_dims = [&](const std::string& name, index_t rows, index_t cols, index_t erows, index_t ecols) {
        if (rows != erows || cols != ecols)
            throw std::runtime_error("dimension mismatch for " + name + ": declared " + std::to_string(erows) +
                                     "x" + std::to_string(ecols) + ", file has " + std::to_string(rows) + "x" +
                                     std::to_string(cols));
    };

    FlowSystem& sys = b.sys;
    sys.M = read_matrix_market(file_of("M"));
    check_dims("M", sys.M.nrows, sys.M.ncols, man.NV, man.NV);
    sys.A = read_matrix_market(file_of("A"));
    check_dims("A", sys.A.nrows, sys.A.ncols, man.NV, man.NV);
    sys.L1 = read_matrix_market(file_of("L1"));
    check_dims("L1", sys.L1.nrows, sys.L1.ncols, man.NV, man.NV);
    sys.L2 = read_matrix_market(file_of("L2"));
    check_dims("L2", sys.L2.nrows, sys.L2.ncols, man.NV, man.NV);
    sys.J = read_matrix_market(file_of("J"));
    check_dims("J", sys.J.nrows, sys.J.ncols, man.m, man.NV);
    sys.H = read_conv_tensor(file_of("H"));
    if (sys.H.n != man.NV) throw std::runtime_error("dimension mismatch for H: n != NV");
    sys.fv = read_vector_market(file_of("fv"));
    sys.fv_diff = read_vector_market(file_of("fv_diff"));
    sys.fv_conv = read_vector_market(file_of("fv_conv"));
    sys.gv = read_vector_market(file_of("gv"));
    sys.fp_div = read_vector_market(file_of("fp_div"));
    for (const auto* v : {&sys.fv, &sys.fv_diff, &sys.fv_conv, &sys.gv})
        if (static_cast<index_t>(v->size()) != man.NV)
            throw std::runtime_error("dimension mismatch for a velocity vector in " + manifest_path);
    if (static_cast<index_t>(sys.fp_div.size()) != man.m)
        throw std::runtime_error("dimension mismatch for fp_div in " + manifest_path);
    sys.pinned = man.pinned;

    if (j.contains("control")) {
        const auto& jc = j.at("control");
        ControlOperators ctrl;
        ctrl.cfg.Nu = jc.at("Nu");
        ctrl.cfg.q = jc.at("q");
        man.Nu = ctrl.cfg.Nu;
        man.q = ctrl.cfg.q;
        ctrl.cfg.input_varying_axis = jc.at("input_varying_axis");
        ctrl.cfg.output_varying_axis = jc.at("output_varying_axis");
        ctrl.cfg.omega_c = io_detail::rect_from_json(jc.at("omega_c"));
        ctrl.cfg.omega_o = io_detail::rect_from_json(jc.at("omega_o"));
        ctrl.cfg.omega_p = io_detail::rect_from_json(jc.at("omega_p"));
        ctrl.B = read_matrix_market(file_of("B"));
        check_dims("B", ctrl.B.nrows, ctrl.B.ncols, man.NV, ctrl.cfg.Nu);
        ctrl.Cv = read_matrix_market(file_of("Cv"));
        check_dims("Cv", ctrl.Cv.nrows, ctrl.Cv.ncols, ctrl.cfg.q, man.NV);
        ctrl.Cp = read_matrix_market(file_of("Cp"));
        const index_t m_pressure = man.pinned ? man.m + 1 : man.m;
        check_dims("Cp", ctrl.Cp.nrows, ctrl.Cp.ncols, 1, m_pressure);
        ctrl.My = read_matrix_market(file_of("My"));
        check_dims("My", ctrl.My.nrows, ctrl.My.ncols, ctrl.cfg.q, ctrl.cfg.q);
        ctrl.Mu = read_matrix_market(file_of("Mu"));
        check_dims("Mu", ctrl.Mu.nrows, ctrl.Mu.ncols, ctrl.cfg.Nu, ctrl.cfg.Nu);
        man.has_control = true;
        b.ctrl = std::move(ctrl);
    }
    if (j.contains("robin")) {
        RobinControl robin;
        robin.Abc = read_matrix_market(file_of("Abc"));
        check_dims("Abc", robin.Abc.nrows, robin.Abc.ncols, man.NV, man.NV);
        robin.Bbc = read_matrix_market(file_of("Bbc"));
        if (robin.Bbc.nrows != man.NV) throw std::runtime_error("dimension mismatch for Bbc");
        robin.alpha = 1.0;
        man.has_robin = true;
        b.robin = std::move(robin);
    }
    return b;
}

/// Velocity (2 components) and pressure sampled at the P1 vertices.
struct FieldSnapshot {
    double time = 0.0;
    Vector vel_x, vel_y, pressure;
};

/// Downsample a reduced state to the P1 vertices for visualization.
inline FieldSnapshot make_snapshot(const CavityMesh& mesh, const DofMap& dm, const Vector& v_gamma,
                                   const Vector& v_inner, const Vector& p, bool pinned, double time) {
    FieldSnapshot snap;
    snap.time = time;
    Vector full = dm.embed_inner(v_inner);
    axpy(1.0, v_gamma, full);
    Vector p_full = p;
    if (pinned) p_full.push_back(0.0);
    require(static_cast<index_t>(p_full.size()) == mesh.n_p1(), "make_snapshot: pressure length mismatch");
    const index_t N = mesh.N;
    snap.vel_x.resize(mesh.n_p1());
    snap.vel_y.resize(mesh.n_p1());
    snap.pressure = p_full;
    for (index_t vy = 0; vy <= N; ++vy)
        for (index_t vx = 0; vx <= N; ++vx) {
            const index_t node = mesh.fine_node(2 * vx, 2 * vy);
            const index_t vtx = mesh.vertex(vx, vy);
            snap.vel_x[vtx] = full[DofMap::dof_of(node, 0)];
            snap.vel_y[vtx] = full[DofMap::dof_of(node, 1)];
        }
    return snap;
}

/// ASCII VTK XML unstructured grid with linear triangles, point-data arrays
/// "velocity" (3 components, z = 0) and "pressure".
inline void write_vtu(const CavityMesh& mesh, const FieldSnapshot& snap, const std::string& path) {
    require(snap.vel_x.size() == static_cast<std::size_t>(mesh.n_p1()) && snap.vel_y.size() == snap.vel_x.size() &&
                snap.pressure.size() == snap.vel_x.size(),
            "write_vtu: snapshot does not match mesh");
    std::ofstream out(path);
    io_detail::write_lines_open(out, path);
    const index_t npts = mesh.n_p1();
    const index_t ncells = static_cast<index_t>(mesh.triangles.size());
    out << "<?xml version=\"1.0\"?>\n";
    out << "<VTKFile type=\"UnstructuredGrid\" version=\"0.1\" byte_order=\"LittleEndian\">\n";
    out << " <UnstructuredGrid>\n";
    out << "  <Piece NumberOfPoints=\"" << npts << "\" NumberOfCells=\"" << ncells << "\">\n";
    out << "   <Points>\n    <DataArray type=\"Float64\" NumberOfComponents=\"3\" format=\"ascii\">\n";
    for (index_t i = 0; i < npts; ++i)
        out << "     " << fmt_double(mesh.p1_coords[i][0]) << " " << fmt_double(mesh.p1_coords[i][1]) << " 0\n";
    out << "    </DataArray>\n   </Points>\n";
    out << "   <Cells>\n    <DataArray type=\"Int32\" Name=\"connectivity\" format=\"ascii\">\n";
    for (const auto& tri : mesh.triangles)
        out << "     " << tri.p1[0] << " " << tri.p1[1] << " " << tri.p1[2] << "\n";
    out << "    </DataArray>\n    <DataArray type=\"Int32\" Name=\"offsets\" format=\"ascii\">\n     ";
    for (index_t c = 1; c <= ncells; ++c) out << 3 * c << (c == ncells ? "\n" : " ");
    out << "    </DataArray>\n    <DataArray type=\"UInt8\" Name=\"types\" format=\"ascii\">\n     ";
    for (index_t c = 0; c < ncells; ++c) out << 5 << (c + 1 == ncells ? "\n" : " ");
    out << "    </DataArray>\n   </Cells>\n";
    out << "   <PointData Vectors=\"velocity\" Scalars=\"pressure\">\n";
    out << "    <DataArray type=\"Float64\" Name=\"velocity\" NumberOfComponents=\"3\" format=\"ascii\">\n";
    for (index_t i = 0; i < npts; ++i)
        out << "     " << fmt_double(snap.vel_x[i]) << " " << fmt_double(snap.vel_y[i]) << " 0\n";
    out << "    </DataArray>\n";
    out << "    <DataArray type=\"Float64\" Name=\"pressure\" format=\"ascii\">\n";
    for (index_t i = 0; i < npts; ++i) out << "     " << fmt_double(snap.pressure[i]) << "\n";
    out << "    </DataArray>\n   </PointData>\n";
    out << "  </Piece>\n </UnstructuredGrid>\n</VTKFile>\n";
}

/// CSV with header t,u_1..u_Nu,yv_1..yv_q,yp; doubles round-trip exactly.
inline void write_signals(const SignalSeries& series, const std::string& path) {
    std::ofstream out(path);
    io_detail::write_lines_open(out, path);
    const std::size_t n = series.times.size();
    const std::size_t nu = series.u.empty() ? 0 : series.u.front().size();
    const std::size_t nq = series.y_v.empty() ? 0 : series.y_v.front().size();
    const bool has_yp = !series.y_p.empty();
    out << "t";
    for (std::size_t l = 1; l <= nu; ++l) out << ",u_" << l;
    for (std::size_t l = 1; l <= nq; ++l) out << ",yv_" << l;
    if (has_yp) out << ",yp";
    out << "\n";
    for (std::size_t r = 0; r < n; ++r) {
        out << fmt_double(series.times[r]);
        for (std::size_t l = 0; l < nu; ++l) out << "," << fmt_double(series.u[r].at(l));
        for (std::size_t l = 0; l < nq; ++l) out << "," << fmt_double(series.y_v[r].at(l));
        if (has_yp) out << "," << fmt_double(series.y_p[r]);
        out << "\n";
    }
}

inline SignalSeries read_signals(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open: " + path);
    std::string header;
    if (!std::getline(in, header)) throw std::runtime_error("empty signals file: " + path);
    std::size_t nu = 0, nq = 0;
    bool has_yp = false;
    {
        std::istringstream hs(header);
        std::string col;
        bool first = true;
        while (std::getline(hs, col, ',')) {
            if (first) {
                if (col != "t") throw std::runtime_error("malformed signals header in " + path);
                first = false;
            } else if (col.rfind("u_", 0) == 0)
                ++nu;
            else if (col.rfind("yv_", 0) == 0)
                ++nq;
            else if (col == "yp")
                has_yp = true;
            else
                throw std::runtime_error("unknown signals column '" + col + "' in " + path);
        }
    }
    SignalSeries series;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string cell;
        std::vector<double> vals;
        while (std::getline(ls, cell, ',')) {
            double v = 0.0;
            const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
            if (res.ec != std::errc{}) throw std::runtime_error("malformed signals value in " + path);
            vals.push_back(v);
        }
        if (vals.size() != 1 + nu + nq + (has_yp ? 1 : 0))
            throw std::runtime_error("signals row width mismatch in " + path);
        series.times.push_back(vals[0]);
        series.u.push_back(Vector(vals.begin() + 1, vals.begin() + 1 + nu));
        if (nq > 0) series.y_v.push_back(Vector(vals.begin() + 1 + nu, vals.begin() + 1 + nu + nq));
        if (has_yp) series.y_p.push_back(vals.back());
    }
    return series;
}

} // namespace nsops
