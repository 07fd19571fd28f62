pub mod ou_grid;
