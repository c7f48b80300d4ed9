//! Print the data-flow graph in DOT and write the SMT-LIB obligations to a
//! temporary directory.

use lore::graph::build_graph;
use lore::verify::emit_smt;

fn main() {
    let p = lore::syntax::compile(include_str!("../corpus/calendar.lore")).expect("calendar compiles");
    print!("{}", build_graph(&p).to_dot());
    let dir = std::env::temp_dir().join("lore-smt");
    std::fs::create_dir_all(&dir).expect("temp dir");
    for f in emit_smt(&p, "calendar").expect("encodable") {
        let path = dir.join(&f.file_name);
        std::fs::write(&path, &f.text).expect("writable");
        println!("wrote {} ({} lines)", path.display(), f.text.lines().count());
    }
}
