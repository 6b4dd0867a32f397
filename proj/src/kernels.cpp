namespace gff {}
