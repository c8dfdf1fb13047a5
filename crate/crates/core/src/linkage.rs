//! Planar kinematics and statics of one inverted five-bar linkage.
//!
//! Frame: origin at the midpoint of the ground link, motors at `(-D/2, 0)`
//! and `(+D/2, 0)`, finger side at negative `y`. Joint angles are the
//! interior angles between the outward ground-link direction and the input
//! link, measured toward the finger, in degrees.

use serde::{Deserialize, Serialize};
use std::ops::{Add, Mul, Sub};
use thiserror::Error;

/// Closure residual tolerance for forward kinematics, mm.
pub const CLOSURE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KinematicsError {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("joint angles ({left}, {right}) deg outside (0, 180)")]
    InvalidAngles { left: f64, right: f64 },
    #[error("no assembly: elbow distance {distance:.6} mm cannot be closed by the output links")]
    NoAssembly { distance: f64 },
    #[error("unreachable on the {0} side")]
    Unreachable(Side),
    #[error("{0} joint would leave its (0, 180) deg range")]
    OutsideJointRange(Side),
    #[error("target within the singularity margin")]
    NearSingular,
    #[error("singular configuration (det J = {det:.3e} mm^2/rad^2)")]
    Singular { det: f64 },
    #[error("no symmetric contact pose at depth {depth} mm")]
    NoContactPose { depth: f64 },
}

pub type Result<T> = std::result::Result<T, KinematicsError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
}

impl std::fmt::Display for Side {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Side::Left => f.write_str("left"),
            Side::Right => f.write_str("right"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dot(self, other: Point) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn cross(self, other: Point) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, other: Point) -> f64 {
        (self - other).norm()
    }

    fn rotate(self, angle: f64) -> Point {
        let (s, c) = angle.sin_cos();
        Point::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }
}

impl Add for Point {
    type Output = Point;
    fn add(self, rhs: Point) -> Point {
        Point::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(self, rhs: Point) -> Point {
        Point::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Point {
    type Output = Point;
    fn mul(self, rhs: f64) -> Point {
        Point::new(self.x * rhs, self.y * rhs)
    }
}

/// Link lengths of one five-bar mechanism, mm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkageGeometry {
    /// Input (motor) link length.
    #[serde(rename = "l1_mm")]
    pub l1: f64,
    /// Output link length.
    #[serde(rename = "l2_mm")]
    pub l2: f64,
    /// Ground link length, the motor axis separation.
    #[serde(rename = "d_mm")]
    pub d: f64,
}

impl LinkageGeometry {
    /// The built prototype: 35 / 17 / 15 mm.
    pub const PROTOTYPE: LinkageGeometry = LinkageGeometry {
        l1: 35.0,
        l2: 17.0,
        d: 15.0,
    };

    pub fn new(l1: f64, l2: f64, d: f64) -> Result<Self> {
        let g = Self { l1, l2, d };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = self.l1.is_finite() && self.l2.is_finite() && self.d.is_finite();
        if !finite || self.l1 <= 0.0 || self.l2 <= 0.0 || self.d < 0.0 {
            return Err(KinematicsError::InvalidGeometry(format!(
                "need L1 > 0, L2 > 0, D >= 0 (got {}, {}, {})",
                self.l1, self.l2, self.d
            )));
        }
        if self.l1 + self.l2 <= self.d / 2.0 {
            return Err(KinematicsError::InvalidGeometry(
                "L1 + L2 must exceed D/2".to_string(),
            ));
        }
        Ok(())
    }

    pub fn motor(&self, side: Side) -> Point {
        match side {
            Side::Left => Point::new(-self.d / 2.0, 0.0),
            Side::Right => Point::new(self.d / 2.0, 0.0),
        }
    }

    /// Inner and outer radius of the annulus one dyad can reach.
    pub fn reach(&self) -> (f64, f64) {
        ((self.l1 - self.l2).abs(), self.l1 + self.l2)
    }

    fn within_annulus(&self, target: Point, side: Side) -> bool {
        let r = target.distance(self.motor(side));
        let (inner, outer) = self.reach();
        let slack = 1e-12 * outer;
        r >= inner - slack && r <= outer + slack
    }

    fn elbow(&self, side: Side, alpha_deg: f64) -> Point {
        let a = alpha_deg.to_radians();
        let m = self.motor(side);
        match side {
            Side::Left => Point::new(m.x - self.l1 * a.cos(), -self.l1 * a.sin()),
            Side::Right => Point::new(m.x + self.l1 * a.cos(), -self.l1 * a.sin()),
        }
    }

    /// d(elbow)/d(alpha), mm/rad.
    fn elbow_rate(&self, side: Side, alpha_deg: f64) -> Point {
        let a = alpha_deg.to_radians();
        match side {
            Side::Left => Point::new(self.l1 * a.sin(), -self.l1 * a.cos()),
            Side::Right => Point::new(-self.l1 * a.sin(), -self.l1 * a.cos()),
        }
    }
}

impl Default for LinkageGeometry {
    fn default() -> Self {
        Self::PROTOTYPE
    }
}

/// Interior motor angles, degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointAngles {
    pub left: f64,
    pub right: f64,
}

impl JointAngles {
    pub fn new(left: f64, right: f64) -> Result<Self> {
        let a = Self { left, right };
        a.validate()?;
        Ok(a)
    }

    pub fn symmetric(alpha: f64) -> Result<Self> {
        Self::new(alpha, alpha)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |a: f64| a.is_finite() && a > 0.0 && a < 180.0;
        if ok(self.left) && ok(self.right) {
            Ok(())
        } else {
            Err(KinematicsError::InvalidAngles {
                left: self.left,
                right: self.right,
            })
        }
    }

    pub fn get(&self, side: Side) -> f64 {
        match side {
            Side::Left => self.left,
            Side::Right => self.right,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    /// The circle intersection with the larger `y`.
    #[default]
    Upper,
    Lower,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectorPose {
    pub x: f64,
    pub y: f64,
    pub branch: Branch,
}

impl EffectorPose {
    pub fn point(&self) -> Point {
        Point::new(self.x, self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Elbow {
    /// Elbow on the far side of its motor from the device midline.
    #[default]
    Out,
    In,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ElbowConfig {
    pub left: Elbow,
    pub right: Elbow,
}

impl ElbowConfig {
    pub const OUT_OUT: ElbowConfig = ElbowConfig {
        left: Elbow::Out,
        right: Elbow::Out,
    };

    pub fn get(&self, side: Side) -> Elbow {
        match side {
            Side::Left => self.left,
            Side::Right => self.right,
        }
    }
}

/// Margins that decide when a configuration counts as near-singular.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SingularityMargins {
    /// Minimum |det J|, mm^2/rad^2.
    pub det_threshold: f64,
    /// Dyad fold/extension margin, degrees.
    pub serial_deg: f64,
    /// Output-link collinearity margin, degrees.
    pub parallel_deg: f64,
}

impl SingularityMargins {
    pub const NONE: SingularityMargins = SingularityMargins {
        det_threshold: 0.0,
        serial_deg: 0.0,
        parallel_deg: 0.0,
    };
}

impl Default for SingularityMargins {
    fn default() -> Self {
        Self {
            det_threshold: 1.0,
            serial_deg: 2.0,
            parallel_deg: 2.0,
        }
    }
}

/// Partial derivatives of the effector position with respect to the joint
/// angles, mm/rad. Columns are (left, right).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Jacobian2x2 {
    pub dx_dleft: f64,
    pub dx_dright: f64,
    pub dy_dleft: f64,
    pub dy_dright: f64,
}

impl Jacobian2x2 {
    pub fn det(&self) -> f64 {
        self.dx_dleft * self.dy_dright - self.dx_dright * self.dy_dleft
    }

    /// Solves `J^T f = rhs`.
    fn solve_transpose(&self, rhs: [f64; 2]) -> [f64; 2] {
        let det = self.det();
        [
            (self.dy_dright * rhs[0] - self.dy_dleft * rhs[1]) / det,
            (-self.dx_dright * rhs[0] + self.dx_dleft * rhs[1]) / det,
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SingularityClass {
    Regular,
    /// A dyad is close to fully folded or fully extended.
    NearSerial,
    /// The output links are close to collinear.
    NearParallel,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SingularityReport {
    /// det of d(x,y)/d(alpha), mm^2/rad^2. Goes to zero at serial
    /// singularities and diverges at parallel ones.
    pub det_j: f64,
    /// det of d(alpha)/d(x,y), rad^2/mm^2. Goes to zero at parallel
    /// singularities.
    pub det_inverse: f64,
    pub class: SingularityClass,
}

/// How motor torques are mapped to the force on the finger.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForceModel {
    /// Each motor's tangential elbow force `tau / L1` is projected onto its
    /// output link (`F2 = F1 cos(gamma)`) and the two link forces are summed.
    /// Reduces to `Fn = 2 F2 cos(phi)` at the symmetric pose.
    #[default]
    LinkProjection,
    /// Rigid-body static equilibrium, `F = J^-T tau`.
    VirtualWork,
}

/// Angles and forces of the symmetric contact pose, degrees and newtons.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForceBreakdown {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub phi: f64,
    pub f1: f64,
    pub f2: f64,
    pub fn_: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellClass {
    Reachable,
    Unreachable,
    NearSingular,
}

/// Regular grid of workspace classifications. Row `j`, column `i` has its
/// center at `(x_min + (i + 0.5) res, y_min + (j + 0.5) res)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkspaceMap {
    pub bounds: Bounds,
    pub resolution: f64,
    pub columns: usize,
    pub rows: usize,
    pub cells: Vec<CellClass>,
}

impl WorkspaceMap {
    pub fn cell(&self, column: usize, row: usize) -> CellClass {
        self.cells[row * self.columns + column]
    }

    pub fn center(&self, column: usize, row: usize) -> Point {
        Point::new(
            self.bounds.x_min + (column as f64 + 0.5) * self.resolution,
            self.bounds.y_min + (row as f64 + 0.5) * self.resolution,
        )
    }

    /// CSV with header `x_mm,y_mm,class`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x_mm,y_mm,class\n");
        for row in 0..self.rows {
            for col in 0..self.columns {
                let c = self.center(col, row);
                let class = match self.cell(col, row) {
                    CellClass::Reachable => "reachable",
                    CellClass::Unreachable => "unreachable",
                    CellClass::NearSingular => "near_singular",
                };
                out.push_str(&format!("{:.4},{:.4},{}\n", c.x, c.y, class));
            }
        }
        out
    }

    /// Binary PGM image, top row = largest `y`.
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.columns, self.rows).into_bytes();
        for row in (0..self.rows).rev() {
            for col in 0..self.columns {
                out.push(match self.cell(col, row) {
                    CellClass::Reachable => 255,
                    CellClass::NearSingular => 128,
                    CellClass::Unreachable => 0,
                });
            }
        }
        out
    }
}

/// Elbows and effector of one assembled configuration.
#[derive(Debug, Clone, Copy)]
struct Assembly {
    angles: JointAngles,
    elbow_left: Point,
    elbow_right: Point,
    effector: Point,
}

/// One five-bar linkage plus the margins used to judge singularity.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Linkage {
    pub geometry: LinkageGeometry,
    pub margins: SingularityMargins,
}

impl Linkage {
    pub fn new(geometry: LinkageGeometry) -> Result<Self> {
        geometry.validate()?;
        Ok(Self {
            geometry,
            margins: SingularityMargins::default(),
        })
    }

    pub fn with_margins(mut self, margins: SingularityMargins) -> Self {
        self.margins = margins;
        self
    }

    pub fn elbows(&self, angles: &JointAngles) -> (Point, Point) {
        (
            self.geometry.elbow(Side::Left, angles.left),
            self.geometry.elbow(Side::Right, angles.right),
        )
    }

    fn assemble(&self, angles: &JointAngles, branch: Branch) -> Result<Assembly> {
        angles.validate()?;
        let (el, er) = self.elbows(angles);
        let l2 = self.geometry.l2;
        let chord = er - el;
        let distance = chord.norm();
        if distance > 2.0 * l2 + CLOSURE_TOLERANCE || distance < 1e-12 {
            return Err(KinematicsError::NoAssembly { distance });
        }
        let half = distance / 2.0;
        let h = (l2 * l2 - half * half).max(0.0).sqrt();
        let mid = (el + er) * 0.5;
        let normal = Point::new(-chord.y / distance, chord.x / distance);
        let a = mid + normal * h;
        let b = mid - normal * h;
        let (upper, lower) = if a.y >= b.y { (a, b) } else { (b, a) };
        let effector = match branch {
            Branch::Upper => upper,
            Branch::Lower => lower,
        };
        Ok(Assembly {
            angles: *angles,
            elbow_left: el,
            elbow_right: er,
            effector,
        })
    }

    pub fn forward_kinematics(&self, angles: &JointAngles, branch: Branch) -> Result<EffectorPose> {
        let asm = self.assemble(angles, branch)?;
        Ok(EffectorPose {
            x: asm.effector.x,
            y: asm.effector.y,
            branch,
        })
    }

    /// Elbow position of one dyad reaching `target`.
    fn solve_dyad(&self, target: Point, side: Side, elbow: Elbow) -> Result<(f64, Point)> {
        let g = &self.geometry;
        if !g.within_annulus(target, side) {
            return Err(KinematicsError::Unreachable(side));
        }
        let motor = g.motor(side);
        let to_target = target - motor;
        let r = to_target.norm();
        if r < 1e-12 {
            // Only possible when L1 == L2; the elbow direction is free.
            return Err(KinematicsError::NearSingular);
        }
        let cos_d = ((g.l1 * g.l1 + r * r - g.l2 * g.l2) / (2.0 * g.l1 * r)).clamp(-1.0, 1.0);
        let delta = cos_d.acos();
        // Out on the left rotates clockwise from the motor-target ray; the
        // right side mirrors it.
        let turn = match (side, elbow) {
            (Side::Left, Elbow::Out) | (Side::Right, Elbow::In) => -delta,
            (Side::Left, Elbow::In) | (Side::Right, Elbow::Out) => delta,
        };
        let arm = to_target.rotate(turn) * (g.l1 / r);
        let alpha = match side {
            Side::Left => (-arm.y).atan2(-arm.x),
            Side::Right => (-arm.y).atan2(arm.x),
        }
        .to_degrees();
        if !(alpha > 0.0 && alpha < 180.0) {
            return Err(KinematicsError::OutsideJointRange(side));
        }
        Ok((alpha, motor + arm))
    }

    /// Inverse kinematics, also returning the FK branch the solution lies on.
    pub fn inverse_kinematics_with_branch(
        &self,
        target: Point,
        elbows: ElbowConfig,
    ) -> Result<(JointAngles, Branch)> {
        let (left, el) = self.solve_dyad(target, Side::Left, elbows.left)?;
        let (right, er) = self.solve_dyad(target, Side::Right, elbows.right)?;
        let angles = JointAngles { left, right };
        let chord = er - el;
        if chord.norm() < 1e-12 {
            return Err(KinematicsError::NearSingular);
        }
        // The target sits on the side of the elbow chord given by the normal
        // (-chord.y, chord.x); compare with the side the upper solution uses.
        let normal = Point::new(-chord.y, chord.x);
        let side_of_target = (target - (el + er) * 0.5).dot(normal);
        let branch = if (side_of_target >= 0.0) == (normal.y >= 0.0) {
            Branch::Upper
        } else {
            Branch::Lower
        };
        let asm = Assembly {
            angles,
            elbow_left: el,
            elbow_right: er,
            effector: target,
        };
        if self.classify(&asm).class != SingularityClass::Regular {
            return Err(KinematicsError::NearSingular);
        }
        Ok((angles, branch))
    }

    pub fn inverse_kinematics(&self, target: Point, elbows: ElbowConfig) -> Result<JointAngles> {
        self.inverse_kinematics_with_branch(target, elbows)
            .map(|(a, _)| a)
    }

    fn jacobian_of(&self, asm: &Assembly) -> (Jacobian2x2, f64, f64) {
        let g = &self.geometry;
        let a_l = asm.effector - asm.elbow_left;
        let a_r = asm.effector - asm.elbow_right;
        let b_l = a_l.dot(g.elbow_rate(Side::Left, asm.angles.left));
        let b_r = a_r.dot(g.elbow_rate(Side::Right, asm.angles.right));
        let det_a = a_l.cross(a_r);
        let j = Jacobian2x2 {
            dx_dleft: a_r.y * b_l / det_a,
            dx_dright: -a_l.y * b_r / det_a,
            dy_dleft: -a_r.x * b_l / det_a,
            dy_dright: a_l.x * b_r / det_a,
        };
        (j, b_l * b_r, det_a)
    }

    fn classify(&self, asm: &Assembly) -> SingularityReport {
        let g = &self.geometry;
        let (j, det_b, det_a) = self.jacobian_of(asm);
        let det_j = det_b / det_a;
        let det_inverse = det_a / det_b;

        let near_line = |u: Point, v: Point, margin_deg: f64| {
            let angle = u.cross(v).abs().atan2(u.dot(v)).to_degrees();
            angle < margin_deg || angle > 180.0 - margin_deg
        };
        let serial = [
            (
                asm.elbow_left - g.motor(Side::Left),
                asm.effector - asm.elbow_left,
            ),
            (
                asm.elbow_right - g.motor(Side::Right),
                asm.effector - asm.elbow_right,
            ),
        ]
        .iter()
        .any(|&(input, output)| near_line(input, output, self.margins.serial_deg));
        let parallel = near_line(
            asm.effector - asm.elbow_left,
            asm.effector - asm.elbow_right,
            self.margins.parallel_deg,
        );

        let class = if serial || det_b == 0.0 || j.det().abs() < self.margins.det_threshold {
            SingularityClass::NearSerial
        } else if parallel || det_a == 0.0 {
            SingularityClass::NearParallel
        } else {
            SingularityClass::Regular
        };
        SingularityReport {
            det_j,
            det_inverse,
            class,
        }
    }

    pub fn singularity_metric(
        &self,
        angles: &JointAngles,
        branch: Branch,
    ) -> Result<SingularityReport> {
        let asm = self.assemble(angles, branch)?;
        Ok(self.classify(&asm))
    }

    pub fn jacobian(&self, angles: &JointAngles, branch: Branch) -> Result<Jacobian2x2> {
        let asm = self.assemble(angles, branch)?;
        let report = self.classify(&asm);
        if report.class != SingularityClass::Regular {
            return Err(KinematicsError::Singular { det: report.det_j });
        }
        Ok(self.jacobian_of(&asm).0)
    }

    /// Force (Fx, Fy) in newtons that the effector exerts on the finger.
    ///
    /// Torques are in N·m about the servo axes, positive in the servo-angle
    /// direction (decreasing interior angle), which presses the effector
    /// toward the finger at the operating pose.
    pub fn effector_force(
        &self,
        angles: &JointAngles,
        torques: (f64, f64),
        branch: Branch,
        model: ForceModel,
    ) -> Result<(f64, f64)> {
        let asm = self.assemble(angles, branch)?;
        let report = self.classify(&asm);
        if report.class != SingularityClass::Regular {
            return Err(KinematicsError::Singular { det: report.det_j });
        }
        let g = &self.geometry;
        match model {
            ForceModel::VirtualWork => {
                let (j, _, _) = self.jacobian_of(&asm);
                // Servo angles run opposite to the interior angles, so
                // dp/dtheta = -J. N·m over mm gives kN, hence the 1e3.
                let f = j.solve_transpose([-torques.0, -torques.1]);
                Ok((f[0] * 1e3, f[1] * 1e3))
            }
            ForceModel::LinkProjection => {
                let l1_m = g.l1 * 1e-3;
                let mut total = Point::default();
                for (side, elbow, tau) in [
                    (Side::Left, asm.elbow_left, torques.0),
                    (Side::Right, asm.elbow_right, torques.1),
                ] {
                    let tangent = g.elbow_rate(side, asm.angles.get(side)) * (-1.0 / g.l1);
                    let link = (asm.effector - elbow) * (1.0 / g.l2);
                    let f1 = tau / l1_m;
                    total = total + link * (f1 * tangent.dot(link));
                }
                Ok((total.x, total.y))
            }
        }
    }

    /// Closed-form force chain at the symmetric contact pose `(0, -depth)`.
    pub fn symmetric_normal_force(&self, depth: f64, torque: f64) -> Result<ForceBreakdown> {
        let no_pose = || KinematicsError::NoContactPose { depth };
        let (angles, branch) = self
            .inverse_kinematics_with_branch(Point::new(0.0, -depth), ElbowConfig::OUT_OUT)
            .map_err(|_| no_pose())?;
        if branch != Branch::Upper {
            return Err(no_pose());
        }
        let g = &self.geometry;
        let alpha = angles.left;
        let a = alpha.to_radians();
        let rise = g.l1 * a.sin() - depth;
        if rise.abs() > g.l2 {
            return Err(no_pose());
        }
        // Equals asin(rise / L2) whenever the elbow sits outside the midline.
        let beta = rise.atan2(g.d / 2.0 + g.l1 * a.cos()).to_degrees();
        let phi = 90.0 - beta;
        let gamma = 90.0 - alpha + beta;
        let f1 = torque / (g.l1 * 1e-3);
        let f2 = f1 * gamma.to_radians().cos();
        let fn_ = 2.0 * f2 * phi.to_radians().cos();
        Ok(ForceBreakdown {
            alpha,
            beta,
            gamma,
            phi,
            f1,
            f2,
            fn_,
        })
    }

    pub fn classify_point(&self, target: Point, elbows: ElbowConfig) -> CellClass {
        let g = &self.geometry;
        if !g.within_annulus(target, Side::Left) || !g.within_annulus(target, Side::Right) {
            return CellClass::Unreachable;
        }
        match self.inverse_kinematics(target, elbows) {
            Ok(_) => CellClass::Reachable,
            Err(KinematicsError::NearSingular) => CellClass::NearSingular,
            Err(_) => CellClass::Unreachable,
        }
    }

    pub fn workspace_grid(
        &self,
        bounds: Bounds,
        resolution: f64,
        elbows: ElbowConfig,
    ) -> WorkspaceMap {
        let count = |lo: f64, hi: f64| {
            if resolution > 0.0 && hi > lo {
                ((hi - lo) / resolution + 1e-9).floor() as usize
            } else {
                0
            }
        };
        let columns = count(bounds.x_min, bounds.x_max);
        let rows = count(bounds.y_min, bounds.y_max);
        let mut map = WorkspaceMap {
            bounds,
            resolution,
            columns,
            rows,
            cells: Vec::new(),
        };
        map.cells = (0..rows)
            .flat_map(|row| (0..columns).map(move |col| (col, row)))
            .map(|(col, row)| self.classify_point(map.center(col, row), elbows))
            .collect();
        map
    }

    /// Largest `x` such that every point of `[0, x]` on the row `y` is
    /// Reachable, scanned at `step` mm. `None` if `(0, y)` itself is not.
    pub fn reachable_half_span(&self, y: f64, elbows: ElbowConfig, step: f64) -> Option<f64> {
        let ok = |x: f64| {
            self.classify_point(Point::new(x, y), elbows) == CellClass::Reachable
                && self.classify_point(Point::new(-x, y), elbows) == CellClass::Reachable
        };
        if !ok(0.0) {
            return None;
        }
        let (_, outer) = self.geometry.reach();
        let mut x = 0.0;
        while x + step <= outer + self.geometry.d && ok(x + step) {
            x += step;
        }
        Some(x)
    }
}
