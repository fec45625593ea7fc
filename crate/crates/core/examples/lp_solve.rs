// Solves a small mixed linear program with the two-phase simplex.

use bandsel::lp::{self, LinearProgram, LpStatus, Relation, VarKind};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    // min -x - 2y + z   s.t.  x + y <= 4,  x - z >= -1,  y + z = 3,  z free
    let mut program = LinearProgram::new(
        vec![-1.0, -2.0, 1.0],
        vec![VarKind::NonNeg, VarKind::NonNeg, VarKind::Free],
    )?;
    program.add_constraint(&[1.0, 1.0, 0.0], Relation::Le, 4.0)?;
    program.add_constraint(&[1.0, 0.0, -1.0], Relation::Ge, -1.0)?;
    program.add_constraint(&[0.0, 1.0, 1.0], Relation::Eq, 3.0)?;

    let solution = lp::solve(&program)?;
    assert_eq!(solution.status, LpStatus::Optimal);
    println!(
        "optimal objective {:.6} at {:?} after {} pivots",
        solution.objective_value, solution.values, solution.iterations
    );
    assert!(program.max_violation(&solution.values) < 1e-7);

    let mut unbounded = LinearProgram::new(vec![-1.0], vec![VarKind::NonNeg])?;
    unbounded.add_constraint(&[-1.0], Relation::Le, 1.0)?;
    println!("second program: {:?}", lp::solve(&unbounded)?.status);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
