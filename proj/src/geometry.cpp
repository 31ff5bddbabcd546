#include "fsstab/geometry.hpp"

#include "fsstab/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

namespace fsstab {

namespace {

constexpr double kPi = std::numbers::pi;

double ring_count_from_perimeter(double perimeter, double h) {
    return std::max(8.0, std::round(perimeter / h));
}

double ellipse_perimeter(double ax, double by) {
    // Ramanujan approximation, plenty for choosing vertex counts.
    const double hh = (ax - by) * (ax - by) / ((ax + by) * (ax + by));
    return kPi * (ax + by) * (1.0 + 3.0 * hh / (10.0 + std::sqrt(4.0 - 3.0 * hh)));
}

}  // namespace

double GeometryConfig::gap() const {
    const double reach = solid_shape == SolidShape::Disk
                             ? solid_radius
                             : std::max(semi_axis_x, semi_axis_y);
    return container_radius - reach;
}

double GeometryConfig::tol_geom() const {
    return 10.0 * mesh_size * mesh_size * (2.0 * container_radius);
}

Vec2 GeometryConfig::solid_boundary_point(double theta) const {
    if (solid_shape == SolidShape::Disk)
        return solid_radius * Vec2(std::cos(theta), std::sin(theta));
    return Vec2(semi_axis_x * std::cos(theta), semi_axis_y * std::sin(theta));
}

GeometryConfig build_geometry(const GeometryConfig& raw) {
    if (raw.container_radius <= 0.0) throw ConfigError("container_radius must be positive");
    if (raw.solid_density <= 0.0) throw ConfigError("solid_density must be positive");
    if (raw.viscosity <= 0.0) throw ConfigError("viscosity must be positive");
    if (raw.mesh_size <= 0.0) throw ConfigError("mesh_size must be positive");
    if (raw.solid_shape == SolidShape::Disk) {
        if (raw.solid_radius <= 0.0) throw ConfigError("solid_radius must be positive");
    } else {
        if (raw.semi_axis_x <= 0.0 || raw.semi_axis_y <= 0.0)
            throw ConfigError("ellipse semi-axes must be positive");
    }
    if (raw.gap() <= 0.0) {
        std::ostringstream os;
        os << "solid touches or exceeds the container: dist(dO, S) = " << raw.gap();
        throw GapViolation(os.str());
    }
    // Solid shapes are centered at the origin by construction, so the
    // centroid condition holds analytically; meshes are re-checked in
    // solid_moments.
    return raw;
}

// ---------------------------------------------------------------------------
// mesh generation
// ---------------------------------------------------------------------------

namespace {

struct Ring {
    std::vector<int> ids;  // vertex indices, CCW, angle 2*pi*i/n
};

// Triangulates the strip between two concentric CCW rings by advancing
// whichever ring has the smaller next angle. Inner may have fewer points.
void zip_rings(const Ring& inner, const Ring& outer, int tag,
               std::vector<Triangle>& out) {
    const int na = static_cast<int>(inner.ids.size());
    const int nb = static_cast<int>(outer.ids.size());
    if (na == 1) {  // fan around a single center point
        for (int j = 0; j < nb; ++j)
            out.push_back({{inner.ids[0], outer.ids[j], outer.ids[(j + 1) % nb]}, tag});
        return;
    }
    auto angle = [](int k, int n) { return 2.0 * kPi * k / n; };
    int i = 0, j = 0;
    while (i < na || j < nb) {
        const bool advance_outer =
            (i == na) || (j < nb && angle(j + 1, nb) <= angle(i + 1, na));
        if (advance_outer) {
            out.push_back({{inner.ids[i % na], outer.ids[j % nb],
                            outer.ids[(j + 1) % nb]},
                           tag});
            ++j;
        } else {
            out.push_back({{inner.ids[i % na], outer.ids[j % nb],
                            inner.ids[(i + 1) % na]},
                           tag});
            ++i;
        }
    }
}

double signed_area(const Mesh& m, const Triangle& t) {
    const Vec2 &a = m.vertices[t.v[0]], &b = m.vertices[t.v[1]], &c = m.vertices[t.v[2]];
    return 0.5 * ((b - a).x() * (c - a).y() - (b - a).y() * (c - a).x());
}

}  // namespace

Mesh generate_mesh(const GeometryConfig& config) {
    const GeometryConfig g = build_geometry(config);
    const double h = g.mesh_size;
    const double b = g.container_radius;

    const double solid_perimeter =
        g.solid_shape == SolidShape::Disk ? 2.0 * kPi * g.solid_radius
                                          : ellipse_perimeter(g.semi_axis_x, g.semi_axis_y);
    const double solid_reach =
        g.solid_shape == SolidShape::Disk ? g.solid_radius
                                          : std::max(g.semi_axis_x, g.semi_axis_y);

    Mesh mesh;
    mesh.mesh_size = h;

    // solid rings: center point, then Ks rings out to the interface
    const int Ks = std::max(2, static_cast<int>(std::lround(solid_reach / h)));
    const int n_iface = static_cast<int>(ring_count_from_perimeter(solid_perimeter, h));

    mesh.vertices.push_back(Vec2::Zero());
    Ring center{{0}};

    std::vector<Ring> solid_rings;
    for (int k = 1; k <= Ks; ++k) {
        const double s = static_cast<double>(k) / Ks;
        const int n = (k == Ks)
                          ? n_iface
                          : static_cast<int>(ring_count_from_perimeter(solid_perimeter * s, h));
        Ring ring;
        for (int i = 0; i < n; ++i) {
            const double theta = 2.0 * kPi * i / n;
            ring.ids.push_back(mesh.num_vertices());
            mesh.vertices.push_back(s * g.solid_boundary_point(theta));
        }
        solid_rings.push_back(std::move(ring));
    }

    zip_rings(center, solid_rings.front(), kTagSolid, mesh.triangles);
    for (size_t k = 0; k + 1 < solid_rings.size(); ++k)
        zip_rings(solid_rings[k], solid_rings[k + 1], kTagSolid, mesh.triangles);

    // fluid rings: from the shared interface ring out to the container circle
    const Ring& interface_ring = solid_rings.back();
    const int Kf = std::max(2, static_cast<int>(std::lround(g.gap() / h)));
    std::vector<Ring> fluid_rings{interface_ring};
    for (int k = 1; k <= Kf; ++k) {
        const double s = static_cast<double>(k) / Kf;
        // blended curve between the solid boundary and the container circle
        double perimeter = 0.0;
        const int probe = 256;
        Vec2 prev;
        for (int i = 0; i <= probe; ++i) {
            const double theta = 2.0 * kPi * i / probe;
            const Vec2 p = (1.0 - s) * g.solid_boundary_point(theta) +
                           s * b * Vec2(std::cos(theta), std::sin(theta));
            if (i > 0) perimeter += (p - prev).norm();
            prev = p;
        }
        const int n = static_cast<int>(ring_count_from_perimeter(perimeter, h));
        Ring ring;
        for (int i = 0; i < n; ++i) {
            const double theta = 2.0 * kPi * i / n;
            const Vec2 p = (1.0 - s) * g.solid_boundary_point(theta) +
                           s * b * Vec2(std::cos(theta), std::sin(theta));
            ring.ids.push_back(mesh.num_vertices());
            mesh.vertices.push_back(p);
        }
        fluid_rings.push_back(std::move(ring));
    }
    for (size_t k = 0; k + 1 < fluid_rings.size(); ++k)
        zip_rings(fluid_rings[k], fluid_rings[k + 1], kTagFluid, mesh.triangles);

    // boundary edges
    auto add_ring_edges = [&mesh](const Ring& ring, int tag) {
        const int n = static_cast<int>(ring.ids.size());
        for (int i = 0; i < n; ++i)
            mesh.boundary_edges.push_back(
                {{ring.ids[i], ring.ids[(i + 1) % n]}, tag, Vec2::Zero(), -1});
    };
    add_ring_edges(interface_ring, kTagInterface);
    add_ring_edges(fluid_rings.back(), kTagOuter);

    validate_mesh(mesh, g.quality_floor_deg);
    return mesh;
}

void validate_mesh(Mesh& mesh, double quality_floor_deg) {
    const int nv = mesh.num_vertices();
    for (auto& t : mesh.triangles) {
        for (int k = 0; k < 3; ++k)
            if (t.v[k] < 0 || t.v[k] >= nv) throw MeshingFailure("triangle references missing vertex");
        const double sa = signed_area(mesh, t);
        if (std::abs(sa) < 1e-14) throw MeshingFailure("degenerate triangle");
        if (sa < 0.0) std::swap(t.v[1], t.v[2]);
    }
    const double min_angle = mesh.min_angle_deg();
    if (min_angle < quality_floor_deg) {
        std::ostringstream os;
        os << "min triangle angle " << min_angle << " deg below floor " << quality_floor_deg;
        throw MeshingFailure(os.str());
    }

    // undirected edge -> adjacent triangles
    std::map<std::pair<int, int>, std::vector<int>> adj;
    for (int ti = 0; ti < static_cast<int>(mesh.triangles.size()); ++ti) {
        const auto& t = mesh.triangles[ti];
        for (int k = 0; k < 3; ++k) {
            int a = t.v[k], b = t.v[(k + 1) % 3];
            if (a > b) std::swap(a, b);
            adj[{a, b}].push_back(ti);
        }
    }

    for (auto& e : mesh.boundary_edges) {
        int a = e.v[0], b = e.v[1];
        if (a > b) std::swap(a, b);
        auto it = adj.find({a, b});
        if (it == adj.end()) throw MeshingFailure("boundary edge not part of any triangle");
        const auto& tris = it->second;
        int fluid_tri = -1, solid_tri = -1;
        for (int ti : tris) {
            if (mesh.triangles[ti].tag == kTagFluid) fluid_tri = ti;
            else solid_tri = ti;
        }
        if (e.tag == kTagInterface) {
            if (tris.size() != 2 || fluid_tri < 0 || solid_tri < 0)
                throw MeshingFailure("interface edge must split one fluid and one solid triangle");
        } else if (e.tag == kTagOuter) {
            if (tris.size() != 1 || fluid_tri < 0)
                throw MeshingFailure("outer edge must bound exactly one fluid triangle");
        } else {
            throw MeshingFailure("unknown boundary edge tag");
        }
        e.fluid_tri = fluid_tri;
        // unit normal pointing away from the adjacent fluid triangle
        const Vec2 tangent = mesh.vertices[e.v[1]] - mesh.vertices[e.v[0]];
        Vec2 n(tangent.y(), -tangent.x());
        n.normalize();
        const auto& ft = mesh.triangles[fluid_tri];
        const Vec2 centroid = (mesh.vertices[ft.v[0]] + mesh.vertices[ft.v[1]] +
                               mesh.vertices[ft.v[2]]) / 3.0;
        const Vec2 mid = 0.5 * (mesh.vertices[e.v[0]] + mesh.vertices[e.v[1]]);
        if (n.dot(mid - centroid) < 0.0) n = -n;
        e.normal = n;
    }

    // every fluid/solid contact edge must be declared as an interface edge
    size_t contact = 0;
    for (const auto& [key, tris] : adj) {
        if (tris.size() == 2 && mesh.triangles[tris[0]].tag != mesh.triangles[tris[1]].tag)
            ++contact;
    }
    size_t declared = 0;
    for (const auto& e : mesh.boundary_edges)
        if (e.tag == kTagInterface) ++declared;
    if (contact != declared)
        throw MeshingFailure("interface edge list does not match fluid/solid contact edges");
}

double Mesh::min_angle_deg() const {
    double worst = 180.0;
    for (const auto& t : triangles) {
        for (int k = 0; k < 3; ++k) {
            const Vec2& a = vertices[t.v[k]];
            const Vec2& b = vertices[t.v[(k + 1) % 3]];
            const Vec2& c = vertices[t.v[(k + 2) % 3]];
            const Vec2 u = b - a, w = c - a;
            const double cosang = u.dot(w) / (u.norm() * w.norm());
            const double ang = std::acos(std::clamp(cosang, -1.0, 1.0)) * 180.0 / kPi;
            worst = std::min(worst, ang);
        }
    }
    return worst;
}

double Mesh::region_area(int tag) const {
    double area = 0.0;
    for (const auto& t : triangles)
        if (t.tag == tag) area += signed_area(*this, t);
    return area;
}

std::vector<int> Mesh::boundary_vertex_ids(int tag) const {
    std::vector<int> ids;
    for (const auto& e : boundary_edges)
        if (e.tag == tag) {
            ids.push_back(e.v[0]);
            ids.push_back(e.v[1]);
        }
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    return ids;
}

// ---------------------------------------------------------------------------
// plain-text mesh format: "mesh2d v1"
// ---------------------------------------------------------------------------

void Mesh::write(std::ostream& os) const {
    os << "mesh2d v1\n";
    os << "V " << vertices.size() << "\n";
    char buf[80];
    for (const auto& v : vertices) {
        std::snprintf(buf, sizeof(buf), "%.17g %.17g\n", v.x(), v.y());
        os << buf;
    }
    os << "T " << triangles.size() << "\n";
    for (const auto& t : triangles)
        os << t.v[0] << ' ' << t.v[1] << ' ' << t.v[2] << ' ' << t.tag << "\n";
    os << "E " << boundary_edges.size() << "\n";
    for (const auto& e : boundary_edges)
        os << e.v[0] << ' ' << e.v[1] << ' ' << e.tag << "\n";
}

Mesh Mesh::read(std::istream& is) {
    std::string word, version;
    is >> word >> version;
    if (word != "mesh2d" || version != "v1") throw MeshingFailure("unsupported mesh format header");
    Mesh mesh;
    size_t n = 0;
    is >> word >> n;
    if (word != "V") throw MeshingFailure("expected vertex section");
    mesh.vertices.resize(n);
    for (auto& v : mesh.vertices) is >> v.x() >> v.y();
    is >> word >> n;
    if (word != "T") throw MeshingFailure("expected triangle section");
    mesh.triangles.resize(n);
    for (auto& t : mesh.triangles) is >> t.v[0] >> t.v[1] >> t.v[2] >> t.tag;
    is >> word >> n;
    if (word != "E") throw MeshingFailure("expected boundary edge section");
    mesh.boundary_edges.resize(n);
    for (auto& e : mesh.boundary_edges) {
        is >> e.v[0] >> e.v[1] >> e.tag;
        e.normal = Vec2::Zero();
        e.fluid_tri = -1;
    }
    if (!is) throw MeshingFailure("truncated mesh file");
    return mesh;
}

void Mesh::save(const std::string& path) const {
    std::ofstream os(path);
    if (!os) throw Error("cannot open mesh file for writing: " + path);
    write(os);
}

Mesh Mesh::load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw Error("cannot open mesh file: " + path);
    return read(is);
}

// ---------------------------------------------------------------------------

RigidBodyData solid_moments(const Mesh& mesh, double rho_s, double tol_geom) {
    if (rho_s <= 0.0) throw ConfigError("solid density must be positive");
    double area = 0.0, inertia = 0.0;
    Vec2 first_moment = Vec2::Zero();
    for (const auto& t : mesh.triangles) {
        if (t.tag != kTagSolid) continue;
        const Vec2 &a = mesh.vertices[t.v[0]], &b = mesh.vertices[t.v[1]], &c = mesh.vertices[t.v[2]];
        const double tri_area = signed_area(mesh, t);
        area += tri_area;
        first_moment += tri_area * (a + b + c) / 3.0;
        // edge-midpoint rule, exact for quadratics
        const Vec2 m0 = 0.5 * (a + b), m1 = 0.5 * (b + c), m2 = 0.5 * (c + a);
        inertia += tri_area / 3.0 * (m0.squaredNorm() + m1.squaredNorm() + m2.squaredNorm());
    }
    if (area <= 0.0) throw MeshingFailure("mesh has no solid region");
    RigidBodyData data;
    data.mass = rho_s * area;
    data.inertia = rho_s * inertia;
    data.centroid = first_moment / area;
    if (data.centroid.norm() > tol_geom) {
        std::ostringstream os;
        os << "solid centroid " << data.centroid.transpose() << " exceeds tolerance " << tol_geom;
        throw CentroidError(os.str());
    }
    return data;
}

}  // namespace fsstab
