"""Q1 finite elements on structured quad grids with per-element coefficients.

Supports the scalar diffusion (Darcy) form a(v, w) = int kappa grad v . grad w
and 2D plane-strain linear elasticity a(v, w) = int C eps(v) : eps(w), with
piecewise-constant material values, Dirichlet/Neumann sides, and assembly
restricted to element subsets (used for subdomain-local operators).

Element matrices use bilinear shape functions and 2x2 Gauss quadrature, which
is exact for affine rectangles. Dirichlet constraints are eliminated
symmetrically: row and column zeroed, unit diagonal, right-hand side adjusted.
"""

import numpy as np
import scipy.sparse as sp

SIDES = ("left", "right", "bottom", "top")


class CoefficientError(ValueError):
    """Nonpositive or malformed material values."""


class MaterialError(ValueError):
    """Elastic parameters outside the admissible range (E > 0, 0 < nu < 0.5)."""


class MissingDirichletError(ValueError):
    """Assembly of a coercive system was requested without any Dirichlet dof."""


class NotPositiveSemidefiniteError(ValueError):
    """v' A v came out significantly negative in an energy-norm evaluation."""


class StructuredMesh:
    """Uniform nx-by-ny grid of bilinear quad elements on [0, lx] x [0, ly].

    Nodes are numbered row-major with x fastest: node (i, j) has index
    j*(nx+1) + i. Elements likewise: element (ex, ey) has index ey*nx + ex
    and corner nodes (counterclockwise) [n00, n10, n11, n01].
    """

    def __init__(self, nx, ny, lx=1.0, ly=1.0):
        nx, ny = int(nx), int(ny)
        if nx < 1 or ny < 1:
            raise ValueError(f"element counts must be positive, got {nx}x{ny}")
        if lx <= 0 or ly <= 0:
            raise ValueError(f"domain extents must be positive, got {lx}x{ly}")
        self.nx = nx
        self.ny = ny
        self.lx = float(lx)
        self.ly = float(ly)
        self._connectivity = None
        self._coords = None

    @property
    def hx(self):
        return self.lx / self.nx

    @property
    def hy(self):
        return self.ly / self.ny

    @property
    def num_nodes(self):
        return (self.nx + 1) * (self.ny + 1)

    @property
    def num_elements(self):
        return self.nx * self.ny

    def node_id(self, i, j):
        return j * (self.nx + 1) + i

    def element_id(self, ex, ey):
        return ey * self.nx + ex

    def element_cell(self, e):
        """Inverse of element_id: element index -> (ex, ey)."""
        return e % self.nx, e // self.nx

    def element_connectivity(self):
        """(num_elements, 4) corner node ids, local order [n00, n10, n11, n01]."""
        if self._connectivity is None:
            ex, ey = np.meshgrid(np.arange(self.nx), np.arange(self.ny))
            n00 = (ey * (self.nx + 1) + ex).ravel()
            self._connectivity = np.column_stack(
                [n00, n00 + 1, n00 + self.nx + 2, n00 + self.nx + 1]
            )
        return self._connectivity

    def node_coords(self):
        """(num_nodes, 2) node coordinates."""
        if self._coords is None:
            x = np.linspace(0.0, self.lx, self.nx + 1)
            y = np.linspace(0.0, self.ly, self.ny + 1)
            xx, yy = np.meshgrid(x, y)
            self._coords = np.column_stack([xx.ravel(), yy.ravel()])
        return self._coords

    def element_centers(self):
        conn = self.element_connectivity()
        return self.node_coords()[conn].mean(axis=1)

    def boundary_nodes(self, side):
        nx, ny = self.nx, self.ny
        if side == "left":
            return np.arange(ny + 1) * (nx + 1)
        if side == "right":
            return np.arange(ny + 1) * (nx + 1) + nx
        if side == "bottom":
            return np.arange(nx + 1)
        if side == "top":
            return np.arange(nx + 1) + ny * (nx + 1)
        raise ValueError(f"unknown side {side!r}, expected one of {SIDES}")

    def __repr__(self):
        return f"StructuredMesh({self.nx}x{self.ny}, {self.lx}x{self.ly})"


class DofMap:
    """Maps (node, component) pairs to global dof indices.

    Scalar problems use one dof per node (dof == node); 2D elasticity uses
    two interleaved dofs per node: (2*node, 2*node + 1).
    """

    def __init__(self, mesh, ndof_per_node=1):
        if ndof_per_node not in (1, 2):
            raise ValueError("only 1 (scalar) or 2 (2D vector) dofs per node")
        self.mesh = mesh
        self.ndof_per_node = ndof_per_node
        self.ndof = mesh.num_nodes * ndof_per_node

    def node_dofs(self, nodes):
        """Dofs of the given nodes, components interleaved, shape (len, k)."""
        nodes = np.atleast_1d(np.asarray(nodes, dtype=int))
        k = self.ndof_per_node
        return nodes[:, None] * k + np.arange(k)[None, :]

    def dof_node(self, dofs):
        return np.asarray(dofs, dtype=int) // self.ndof_per_node

    def dof_coords(self):
        """(ndof, 2) coordinates: node coordinates repeated per component."""
        return np.repeat(self.mesh.node_coords(), self.ndof_per_node, axis=0)


class CoefficientField:
    """Piecewise-constant per-element material values.

    Holds one positive scalar per element: the conductivity kappa for Darcy,
    or Young's modulus for elasticity (with a per-element Poisson ratio
    alongside). Values never vary within an element.
    """

    def __init__(self, kind, values, poisson=None):
        values = np.asarray(values, dtype=float).ravel()
        if values.size == 0:
            raise CoefficientError("empty coefficient field")
        if not np.all(np.isfinite(values)) or np.any(values <= 0):
            raise CoefficientError("coefficient values must be positive and finite")
        self.kind = kind
        self.values = values
        if poisson is not None:
            poisson = np.asarray(poisson, dtype=float).ravel()
            if poisson.size == 1:
                poisson = np.full(values.size, poisson[0])
            if poisson.size != values.size:
                raise MaterialError("Poisson array does not match element count")
            if np.any(poisson <= 0) or np.any(poisson >= 0.5):
                raise MaterialError("Poisson ratio must lie in (0, 0.5)")
        self.poisson = poisson

    @property
    def contrast(self):
        return float(self.values.max() / self.values.min())

    def kappa(self):
        """Per-element conductivity (Darcy view)."""
        return self.values

    def elastic(self):
        """Per-element (E, nu) pair (plane-strain view); nu defaults to 0.3."""
        nu = self.poisson
        if nu is None:
            nu = np.full(self.values.size, 0.3)
        return self.values, nu

    @classmethod
    def constant(cls, mesh, value=1.0, nu=0.3):
        return cls("constant", np.full(mesh.num_elements, float(value)), nu)

    @classmethod
    def layers(cls, mesh, count, contrast, base=1.0, nu=(0.3, 0.3)):
        """`count` horizontal layers of equal thickness; odd layers get
        base*contrast, even layers base. nu = (nu_even, nu_odd) for elasticity."""
        if count < 1:
            raise CoefficientError("layer count must be >= 1")
        if contrast <= 0:
            raise CoefficientError("contrast must be positive")
        ey = np.arange(mesh.num_elements) // mesh.nx
        layer = (ey * count) // mesh.ny
        odd = (layer % 2).astype(bool)
        values = np.where(odd, base * contrast, base)
        nu_even, nu_odd = (nu, nu) if np.isscalar(nu) else nu
        poisson = np.where(odd, nu_odd, nu_even)
        return cls("layers", values, poisson)

    @classmethod
    def skyscrapers(cls, mesh, rectangles, contrast, base=1.0, nu=(0.3, 0.3)):
        return cls._from_rectangles(mesh, rectangles, contrast, base, nu, "skyscrapers")

    @classmethod
    def channels(cls, mesh, rectangles, contrast, base=1.0, nu=(0.3, 0.3)):
        return cls._from_rectangles(mesh, rectangles, contrast, base, nu, "channels")

    @classmethod
    def _from_rectangles(cls, mesh, rectangles, contrast, base, nu, kind):
        """Axis-aligned rectangles (x0, y0, x1, y1) in fractions of the
        domain; elements whose center falls inside any rectangle get
        base*contrast."""
        if contrast <= 0:
            raise CoefficientError("contrast must be positive")
        centers = mesh.element_centers()
        fx = centers[:, 0] / mesh.lx
        fy = centers[:, 1] / mesh.ly
        inside = np.zeros(mesh.num_elements, dtype=bool)
        for x0, y0, x1, y1 in rectangles:
            inside |= (fx >= x0) & (fx <= x1) & (fy >= y0) & (fy <= y1)
        values = np.where(inside, base * contrast, base)
        nu_out, nu_in = (nu, nu) if np.isscalar(nu) else nu
        poisson = np.where(inside, nu_in, nu_out)
        return cls(kind, values, poisson)

    @classmethod
    def raster(cls, mesh, grid_values):
        values = np.asarray(grid_values, dtype=float).ravel()
        if values.size != mesh.num_elements:
            raise CoefficientError(
                f"raster has {values.size} values, mesh has {mesh.num_elements} elements"
            )
        return cls("raster", values)

    @classmethod
    def from_raster_file(cls, mesh, path):
        """Plain-text raster: first line 'nx ny', then nx*ny positive values
        in row-major element order (x fastest)."""
        with open(path) as fh:
            header = fh.readline().split()
            if len(header) != 2:
                raise CoefficientError(f"{path}: first line must be 'nx ny'")
            nx, ny = int(header[0]), int(header[1])
            values = np.array(fh.read().split(), dtype=float)
        if (nx, ny) != (mesh.nx, mesh.ny):
            raise CoefficientError(
                f"{path}: raster is {nx}x{ny}, mesh is {mesh.nx}x{mesh.ny}"
            )
        if values.size != nx * ny:
            raise CoefficientError(f"{path}: expected {nx * ny} values, got {values.size}")
        return cls.raster(mesh, values)


class BoundaryCondition:
    """Dirichlet and Neumann data per rectangle side.

    dirichlet: {side: value} with value a scalar, a pair (elasticity), or a
    callable (x, y) -> value. neumann: {side: flux} with flux a scalar
    (Darcy) or a traction pair (elasticity). Sides absent from both dicts
    get the natural zero-flux condition. Dirichlet constrains every dof of
    the side's nodes; at shared corners, later sides in SIDES order win.
    """

    def __init__(self, dirichlet=None, neumann=None):
        self.dirichlet = dict(dirichlet or {})
        self.neumann = dict(neumann or {})
        for side in list(self.dirichlet) + list(self.neumann):
            if side not in SIDES:
                raise ValueError(f"unknown side {side!r}, expected one of {SIDES}")

    def has_dirichlet(self):
        return bool(self.dirichlet)

    def constrained_dofs(self, mesh, dofmap):
        """All Dirichlet-constrained dofs with their values, sorted by dof."""
        k = dofmap.ndof_per_node
        coords = mesh.node_coords()
        values = {}
        for side in SIDES:
            if side not in self.dirichlet:
                continue
            val = self.dirichlet[side]
            for node in mesh.boundary_nodes(side):
                x, y = coords[node]
                v = val(x, y) if callable(val) else val
                v = np.atleast_1d(np.asarray(v, dtype=float))
                if v.size != k:
                    raise ValueError(
                        f"Dirichlet value on {side!r} has {v.size} components, expected {k}"
                    )
                for c in range(k):
                    values[node * k + c] = v[c]
        if not values:
            return np.empty(0, dtype=int), np.empty(0)
        dofs = np.array(sorted(values), dtype=int)
        return dofs, np.array([values[d] for d in dofs])


# 2x2 Gauss rule on the reference square [-1, 1]^2 (exact for Q1 stiffness
# on rectangles).
_GPTS = np.array([-1.0, 1.0]) / np.sqrt(3.0)


def _shape_gradients(xi, eta):
    """d/dxi and d/deta of the four bilinear shape functions, local corner
    order [(-1,-1), (1,-1), (1,1), (-1,1)]."""
    dxi = 0.25 * np.array([-(1 - eta), (1 - eta), (1 + eta), -(1 + eta)])
    deta = 0.25 * np.array([-(1 - xi), -(1 + xi), (1 + xi), (1 - xi)])
    return dxi, deta


def _unit_gradient_blocks():
    """Geometry-independent 4x4 blocks Kxx, Kyy with
    K_element = kappa * ((hy/hx) * Kxx + (hx/hy) * Kyy)."""
    kxx = np.zeros((4, 4))
    kyy = np.zeros((4, 4))
    for xi in _GPTS:
        for eta in _GPTS:
            dxi, deta = _shape_gradients(xi, eta)
            kxx += np.outer(dxi, dxi)
            kyy += np.outer(deta, deta)
    return kxx, kyy


_KXX, _KYY = _unit_gradient_blocks()


def darcy_element_matrix(hx, hy):
    """4x4 unit-conductivity stiffness matrix of an hx-by-hy rectangle."""
    return (hy / hx) * _KXX + (hx / hy) * _KYY


def _elasticity_b_matrices(hx, hy):
    """Strain-displacement matrices at the four Gauss points, (4, 3, 8),
    dof order (u0x, u0y, u1x, u1y, ...)."""
    bs = []
    for xi in _GPTS:
        for eta in _GPTS:
            dxi, deta = _shape_gradients(xi, eta)
            dx = dxi * (2.0 / hx)
            dy = deta * (2.0 / hy)
            b = np.zeros((3, 8))
            b[0, 0::2] = dx
            b[1, 1::2] = dy
            b[2, 0::2] = dy
            b[2, 1::2] = dx
            bs.append(b)
    return np.array(bs)


def plane_strain_moduli(young, nu):
    """(n, 3, 3) plane-strain constitutive matrices for Voigt order
    (eps_xx, eps_yy, gamma_xy)."""
    young = np.atleast_1d(np.asarray(young, dtype=float))
    nu = np.atleast_1d(np.asarray(nu, dtype=float))
    if np.any(young <= 0):
        raise MaterialError("Young's modulus must be positive")
    if np.any(nu <= 0) or np.any(nu >= 0.5):
        raise MaterialError("Poisson ratio must lie in (0, 0.5)")
    f = young / ((1 + nu) * (1 - 2 * nu))
    d = np.zeros((young.size, 3, 3))
    d[:, 0, 0] = d[:, 1, 1] = f * (1 - nu)
    d[:, 0, 1] = d[:, 1, 0] = f * nu
    d[:, 2, 2] = f * (1 - 2 * nu) / 2
    return d


def elasticity_element_matrices(hx, hy, young, nu):
    """(n, 8, 8) plane-strain element stiffness matrices, one per material
    pair; exactly symmetric."""
    b = _elasticity_b_matrices(hx, hy)
    d = plane_strain_moduli(young, nu)
    detj = hx * hy / 4.0
    ke = np.einsum("gki,nkl,glj->nij", b, d, b) * detj
    return 0.5 * (ke + ke.transpose(0, 2, 1))


def _element_dofs(mesh, dofmap, elements):
    """(nelem, 4*k) global dof columns of the given elements."""
    conn = mesh.element_connectivity()[elements]
    k = dofmap.ndof_per_node
    if k == 1:
        return conn
    return (conn[:, :, None] * 2 + np.arange(2)[None, None, :]).reshape(len(conn), 8)


def _assemble(element_matrices, element_dofs, ndof):
    nloc = element_dofs.shape[1]
    rows = np.repeat(element_dofs, nloc, axis=1).ravel()
    cols = np.tile(element_dofs, (1, nloc)).ravel()
    a = sp.coo_matrix((element_matrices.ravel(), (rows, cols)), shape=(ndof, ndof))
    a = a.tocsr()
    a.sum_duplicates()
    a.sort_indices()
    return a


def darcy_stiffness(mesh, field):
    """Global unconstrained (pure Neumann) Darcy stiffness matrix."""
    dofmap = DofMap(mesh, 1)
    ke = darcy_element_matrix(mesh.hx, mesh.hy)
    elements = np.arange(mesh.num_elements)
    mats = field.kappa()[:, None, None] * ke[None, :, :]
    return _assemble(mats, _element_dofs(mesh, dofmap, elements), dofmap.ndof)


def darcy_load(mesh, f=1.0):
    """Load vector of a constant volume source."""
    conn = mesh.element_connectivity()
    b = np.zeros(mesh.num_nodes)
    np.add.at(b, conn.ravel(), f * mesh.hx * mesh.hy / 4.0)
    return b


def elasticity_stiffness(mesh, field):
    """Global unconstrained plane-strain stiffness matrix."""
    dofmap = DofMap(mesh, 2)
    young, nu = field.elastic()
    mats = elasticity_element_matrices(mesh.hx, mesh.hy, young, nu)
    elements = np.arange(mesh.num_elements)
    return _assemble(mats, _element_dofs(mesh, dofmap, elements), dofmap.ndof)


def elasticity_load(mesh, body_force=(0.0, 0.0)):
    conn = mesh.element_connectivity()
    b = np.zeros(mesh.num_nodes * 2)
    w = mesh.hx * mesh.hy / 4.0
    for c in (0, 1):
        np.add.at(b, conn.ravel() * 2 + c, body_force[c] * w)
    return b


def neumann_load(mesh, dofmap, bc):
    """Boundary contributions of constant side fluxes / tractions."""
    k = dofmap.ndof_per_node
    b = np.zeros(dofmap.ndof)
    for side, flux in bc.neumann.items():
        flux = np.atleast_1d(np.asarray(flux, dtype=float))
        if flux.size != k:
            raise ValueError(
                f"Neumann data on {side!r} has {flux.size} components, expected {k}"
            )
        if not np.any(flux):
            continue
        nodes = mesh.boundary_nodes(side)
        edge = mesh.hy if side in ("left", "right") else mesh.hx
        # trapezoidal edge rule, exact for constant flux: len/2 per end node
        weight = np.full(len(nodes), edge)
        weight[0] = weight[-1] = edge / 2.0
        for c in range(k):
            b[nodes * k + c] += flux[c] * weight
    return b


def apply_dirichlet(a, b, dofs, values):
    """Symmetric elimination: rows and columns zeroed, unit diagonal, rhs
    adjusted so constrained dofs solve to their prescribed values."""
    n = a.shape[0]
    dofs = np.asarray(dofs, dtype=int)
    lift = np.zeros(n)
    lift[dofs] = values
    b = b - a @ lift
    b[dofs] = values
    keep = np.ones(n)
    keep[dofs] = 0.0
    mask_diag = sp.diags(keep)
    put_one = np.zeros(n)
    put_one[dofs] = 1.0
    a = (mask_diag @ a @ mask_diag + sp.diags(put_one)).tocsr()
    a.sum_duplicates()
    a.sort_indices()
    return a, b


def assemble_darcy(mesh, field, bc, f=1.0):
    """Dirichlet-eliminated Darcy system (SPD on free dofs)."""
    dofmap = DofMap(mesh, 1)
    a = darcy_stiffness(mesh, field)
    b = darcy_load(mesh, f) + neumann_load(mesh, dofmap, bc)
    dofs, values = bc.constrained_dofs(mesh, dofmap)
    if dofs.size == 0:
        raise MissingDirichletError("no Dirichlet dof: assembled system would be singular")
    return apply_dirichlet(a, b, dofs, values)


def assemble_elasticity(mesh, field, bc, body_force=(0.0, 0.0)):
    """Dirichlet-eliminated plane-strain system (SPD on free dofs)."""
    dofmap = DofMap(mesh, 2)
    a = elasticity_stiffness(mesh, field)
    b = elasticity_load(mesh, body_force) + neumann_load(mesh, dofmap, bc)
    dofs, values = bc.constrained_dofs(mesh, dofmap)
    if dofs.size == 0:
        raise MissingDirichletError("no Dirichlet dof: assembled system would be singular")
    return apply_dirichlet(a, b, dofs, values)


def assemble_local(mesh, field, bc, elements, dofmap=None, dofs=None, constrained_diag=1.0):
    """Neumann operator over an element subset.

    Global Dirichlet constraints are applied only where the subset's dofs
    meet the Dirichlet boundary (rows/columns zeroed, `constrained_diag` on
    the diagonal); no constraints are imposed on interior subset boundaries.
    Returns (matrix over `dofs`, dofs). When `dofs` is omitted it is the
    sorted union of the subset's dofs; when given it must cover the subset.
    """
    elements = np.asarray(elements, dtype=int)
    if elements.size == 0:
        raise ValueError("empty element subset")
    if dofmap is None:
        dofmap = DofMap(mesh, 1)
    edofs = _element_dofs(mesh, dofmap, elements)
    if dofs is None:
        dofs = np.unique(edofs)
    else:
        dofs = np.asarray(dofs, dtype=int)
    local = np.searchsorted(dofs, edofs)
    if np.any(local >= dofs.size) or np.any(dofs[local] != edofs):
        raise ValueError("dof list does not cover the element subset")
    if dofmap.ndof_per_node == 1:
        ke = darcy_element_matrix(mesh.hx, mesh.hy)
        mats = field.kappa()[elements, None, None] * ke[None, :, :]
    else:
        young, nu = field.elastic()
        mats = elasticity_element_matrices(mesh.hx, mesh.hy, young[elements], nu[elements])
    a = _assemble(mats, local, dofs.size)
    cdofs, _ = bc.constrained_dofs(mesh, dofmap)
    hit = np.isin(dofs, cdofs).nonzero()[0]
    if hit.size:
        keep = np.ones(dofs.size)
        keep[hit] = 0.0
        diag = np.zeros(dofs.size)
        diag[hit] = constrained_diag
        a = (sp.diags(keep) @ a @ sp.diags(keep) + sp.diags(diag)).tocsr()
        a.sum_duplicates()
        a.sort_indices()
    return a, dofs


def energy_norm(a, v, tol=1e-10):
    """sqrt(v' A v) for symmetric positive semi-definite A."""
    v = np.asarray(v, dtype=float)
    quad = float(v @ (a @ v))
    if quad < -tol * float(v @ v):
        raise NotPositiveSemidefiniteError(f"v'Av = {quad:.3e} is negative beyond tolerance")
    return np.sqrt(max(quad, 0.0))
