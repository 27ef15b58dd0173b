// M has two non-virtual bases and one virtual base.
class N {
public:
  int n;
  virtual void nf() { n++; }
};
class P {
public:
  int p;
  virtual void pf() { p++; }
};
class A {
public:
  int a;
  virtual void af() { a++; }
};
class M : public N, public P, public virtual A {
public:
  int m;
  virtual void mf() { m++; }
};

int main() {
  N *n = new N();
  P *p = new P();
  M *m = new M();
  n->nf();
  p->pf();
  m->mf();
  return 0;
}
